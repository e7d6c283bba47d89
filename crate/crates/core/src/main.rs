fn main() {
    std::process::exit(tucker_saliency::cli::main());
}
