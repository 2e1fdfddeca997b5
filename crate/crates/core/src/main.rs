fn main() {
    std::process::exit(textcnn_lab::cli::run(std::env::args_os()));
}
