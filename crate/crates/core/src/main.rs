fn main() {
    std::process::exit(ruinfund::cli::main_with_args(std::env::args_os()));
}
