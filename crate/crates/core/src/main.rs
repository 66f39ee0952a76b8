fn main() {
    std::process::exit(subriemann::cli::main_from_args(std::env::args_os()));
}
