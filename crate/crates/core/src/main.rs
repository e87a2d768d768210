fn main() {
    std::process::exit(reflector_loc::cli::main_with(std::env::args_os()));
}
