fn main() {
    std::process::exit(mitarget::cli::main_with_args(std::env::args_os()));
}
