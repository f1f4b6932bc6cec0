fn main() {
    std::process::exit(dst_track::cli::main_with_args(std::env::args_os()));
}
