fn main() {
    std::process::exit(qmed::cli::main_with_args(std::env::args_os()));
}
