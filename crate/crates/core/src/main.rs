fn main() {
    std::process::exit(cavity_envelope::cli::main_with_args(std::env::args_os()));
}
