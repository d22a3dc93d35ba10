fn main() {
    std::process::exit(strainer_core::cli::main_with_args(std::env::args_os()));
}
