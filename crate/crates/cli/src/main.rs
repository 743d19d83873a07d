fn main() {
    std::process::exit(rram_cli::main_with_args(std::env::args_os()));
}
