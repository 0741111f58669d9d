fn main() {
    let dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::generate(&dir) {
        Ok(b) => {
            b.write_to_file(format!("{dir}/include/diracsol.h"));
        }
        Err(e) => println!("cargo:warning=cbindgen: {e}"),
    }
}
