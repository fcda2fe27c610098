fn main() {
    std::process::exit(impulsim_cli::main_with_args(std::env::args_os()));
}
