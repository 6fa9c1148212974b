fn main() -> anyhow::Result<()> {
    blockres::cli::main()
}
