fn main() {
    std::process::exit(relay_ra::cli::main_with_args(std::env::args_os()));
}
