fn main() {
    std::process::exit(ddlqg::cli::run(std::env::args_os()));
}
