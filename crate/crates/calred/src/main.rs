fn main() {
    std::process::exit(calred::cli::main_with(std::env::args_os()));
}
