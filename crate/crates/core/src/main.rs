fn main() {
    std::process::exit(lpr::runner::main_with_args(std::env::args_os()));
}
