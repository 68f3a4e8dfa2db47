fn main() {
    std::process::exit(angular_margin::cli::run(std::env::args_os()));
}
