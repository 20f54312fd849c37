fn main() {
    std::process::exit(agewave::cli::main_with_args(std::env::args_os()));
}
