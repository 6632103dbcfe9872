fn main() {
    std::process::exit(hrstat::cli::main_with_args(std::env::args_os()));
}
