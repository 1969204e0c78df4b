fn main() {
    std::process::exit(mkv::cli::main_with_args(std::env::args_os()));
}
