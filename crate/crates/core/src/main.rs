fn main() {
    std::process::exit(ordmix::run_cli());
}
