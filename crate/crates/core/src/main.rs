fn main() {
    std::process::exit(levelset_eit::cli::run(std::env::args_os()));
}
