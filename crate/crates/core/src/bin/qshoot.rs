fn main() {
    std::process::exit(qshoot::cli::run(std::env::args_os()));
}
