fn main() {
    std::process::exit(chaoskit::cli::main_with_args(std::env::args_os()));
}
