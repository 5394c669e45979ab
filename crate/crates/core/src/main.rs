fn main() {
    env_logger::init();
    std::process::exit(maxcutpool::cli::run(std::env::args_os()));
}
