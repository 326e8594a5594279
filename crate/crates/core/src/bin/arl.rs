fn main() {
    std::process::exit(arl_core::cli::run(std::env::args_os()));
}
