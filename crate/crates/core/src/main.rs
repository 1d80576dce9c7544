fn main() {
    std::process::exit(ddmv_core::cli::main_with_args(std::env::args_os()));
}
