fn main() {
    env_logger::init();
    std::process::exit(floquet_core::cli::main_with_args(std::env::args_os()));
}
