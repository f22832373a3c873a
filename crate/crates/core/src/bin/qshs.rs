fn main() {
    std::process::exit(qshs::cli::run(std::env::args_os()));
}
