//! CXL vs PCIe RAO throughput for each CircusTent pattern.

use cxlsim::coherence::{Fabric, FabricConfig, MemoryMap};
use cxlsim::interconnect::{DmaEngine, Profile};
use cxlsim::nic::{run_rao, NicDevice, NicTrace};
use cxlsim::workloads::circustent::{gen_circustent, CircusPattern, PatternKind};

fn main() -> Result<(), cxlsim::SimError> {
    let n = 20_000;
    let cxl = Profile::named("cxl-asic-1500")?;
    let pcie = Profile::named("pcie-asic-1500")?;
    for k in PatternKind::ALL {
        let reqs = gen_circustent(&CircusPattern::suite_default(k, n, 1))?;
        let mut f = Fabric::new(&FabricConfig::default(), cxl.latency.resolve()?)?;
        let a = run_rao(NicDevice::Cxl(&mut f), &cxl.nic, &reqs, &mut NicTrace::default())?;
        let mut f = Fabric::new(&FabricConfig::default(), pcie.latency.resolve()?)?;
        let mut dma = DmaEngine::new(pcie.dma.clone(), MemoryMap::default())?;
        let b = run_rao(NicDevice::Pcie { fabric: &mut f, dma: &mut dma }, &pcie.nic, &reqs, &mut NicTrace::default())?;
        println!(
            "{:<8} cxl {:>7.1} Mops/s  pcie {:>6.1} Mops/s  x{:.1}",
            k.name(),
            a.throughput(),
            b.throughput(),
            a.throughput() / b.throughput()
        );
    }
    Ok(())
}
