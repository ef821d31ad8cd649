fn main() {
    std::process::exit(dithercap::cli::main_with_args(std::env::args_os()));
}
