fn main() {
    std::process::exit(pcl_cli::run(std::env::args_os()));
}
