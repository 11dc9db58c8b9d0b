//! Minimal external SR engine: nearest-neighbour x4 upscale of every PNG in
//! the input directory. `--fault` makes it misbehave on purpose.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use irsr_core::resample::upscale_x4;
use irsr_core::{list_pngs, load_image, save_image, Filter, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    /// Exit with status 3 after writing nothing.
    Exit,
    /// Skip the first output file.
    Missing,
    /// Write outputs one pixel too narrow.
    Shape,
    /// Write one unexpected extra file.
    Extra,
    /// Sleep far longer than any sane timeout.
    Hang,
}

#[derive(Debug, Parser)]
#[command(name = "irsr-stub-engine")]
struct Args {
    input_dir: PathBuf,
    output_dir: PathBuf,
    #[arg(long, value_enum)]
    fault: Option<Fault>,
}

fn run(args: &Args) -> Result<(), String> {
    match args.fault {
        Some(Fault::Exit) => {
            eprintln!("stub engine: injected failure");
            return Err(String::new());
        }
        Some(Fault::Hang) => std::thread::sleep(Duration::from_secs(600)),
        _ => {}
    }
    std::fs::create_dir_all(&args.output_dir).map_err(|e| e.to_string())?;
    let files = list_pngs(&args.input_dir).map_err(|e| e.to_string())?;
    for (i, (name, path)) in files.iter().enumerate() {
        if i == 0 && args.fault == Some(Fault::Missing) {
            continue;
        }
        let lr = load_image(path).map_err(|e| e.to_string())?;
        let mut sr = upscale_x4(&lr, Filter::Nearest).map_err(|e| e.to_string())?;
        if args.fault == Some(Fault::Shape) {
            let (w, h, c) = (sr.width() - 1, sr.height(), sr.channels());
            let data = (0..h)
                .flat_map(|y| sr.samples()[y * (w + 1) * c..(y * (w + 1) + w) * c].to_vec())
                .collect();
            sr = Image::new(w, h, c, sr.bit_depth(), data).map_err(|e| e.to_string())?;
        }
        save_image(&sr, args.output_dir.join(name)).map_err(|e| e.to_string())?;
        if i == 0 && args.fault == Some(Fault::Extra) {
            save_image(&sr, args.output_dir.join("zz_extra.png")).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            if !msg.is_empty() {
                eprintln!("stub engine: {msg}");
            }
            ExitCode::from(3)
        }
    }
}
