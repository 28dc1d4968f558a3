fn main() {
    std::process::exit(orbitlab::cli::main_with_args(std::env::args_os()));
}
