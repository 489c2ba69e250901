fn main() {
    std::process::exit(replyclass_cli::run(std::env::args_os()));
}
