fn main() {
    std::process::exit(lienav::cli::main_with_args(std::env::args_os()));
}
