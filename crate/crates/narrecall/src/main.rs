fn main() {
    std::process::exit(narrecall::cli::run(std::env::args_os()));
}
