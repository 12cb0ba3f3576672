fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VISIA_LOG", "error")).init();
    std::process::exit(visia::cli::main_with(std::env::args_os()));
}
