fn main() {
    std::process::exit(tendon_core::cli::run(std::env::args_os()));
}
