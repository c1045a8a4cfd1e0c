fn main() {
    std::process::exit(spbe::cli::main_with_args(std::env::args_os()));
}
