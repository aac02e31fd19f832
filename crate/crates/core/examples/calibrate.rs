//! Prints the calibration table for a profile (default `cxl-fpga-400`).

use cxlsim::harness::{calibrate_check, SimConfig};

fn main() -> Result<(), cxlsim::SimError> {
    let profile = std::env::args().nth(1).unwrap_or_else(|| "cxl-fpga-400".into());
    let table = calibrate_check(&SimConfig::for_profile(&profile)?)?;
    println!("{table}");
    Ok(())
}
