fn main() {
    std::process::exit(odcfmsv_cli::main_with_args(std::env::args_os()));
}
