fn main() {
    std::process::exit(disseminate::harness::main_with_args(std::env::args_os()));
}
