fn main() {
    std::process::exit(nevlab::cli::run(std::env::args_os()));
}
