fn main() {
    std::process::exit(dhest::cli::main_with_args(std::env::args_os()));
}
