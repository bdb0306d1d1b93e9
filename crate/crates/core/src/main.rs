fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ITHACA_KIT_LOG")).init();
    std::process::exit(ithaca_kit::cli::main_with(std::env::args_os()));
}
