fn main() {
    std::process::exit(glm_balance::cli::run(std::env::args_os()));
}
