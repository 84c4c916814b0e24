use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nlos_model::checkpoint;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{store, tcube};

fn describe(cfg: &RunConfig, path: Option<&Path>) -> Result<String> {
    let mut s = String::new();
    let Some(path) = path else {
        return Ok(cfg.to_json());
    };
    if path.is_dir() {
        if !store::is_dataset(path) {
            return Err(CliError::Usage(format!("{}: not a dataset directory", path.display())));
        }
        let m = store::read_manifest(path)?;
        let frames: usize = m.sequences.iter().map(|e| e.frames.len()).sum();
        let w = m.config.render.wall;
        let _ = writeln!(s, "dataset {}", path.display());
        let _ = writeln!(s, "  sequences: {}, frames: {frames}", m.sequences.len());
        let _ = writeln!(
            s,
            "  dense {}x{}, fast-scan {}x{}, {} bins of {} ps",
            w.resolution[0],
            w.resolution[1],
            m.config.target_resolution[0],
            m.config.target_resolution[1],
            m.config.render.time_axis.num_bins,
            m.config.render.time_axis.bin_width * 1e12
        );
        for e in &m.sequences {
            let _ = writeln!(s, "  {}: {} ({} frames)", e.name, e.shape.kind.name(), e.frames.len());
        }
        return Ok(s);
    }
    let mut magic = [0u8; 8];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(CliError::io(path))?;
    if n >= 4 && &magic[..4] == tcube::MAGIC {
        let c = store::load_cube(path)?;
        let w = c.wall();
        let _ = writeln!(s, "tcube {}", path.display());
        let _ = writeln!(s, "  kind: {:?}", c.kind());
        let _ = writeln!(s, "  scan: {}x{}, bins: {} of {} ps", c.nx(), c.ny(), c.num_bins(), c.time_axis().bin_width * 1e12);
        let _ = writeln!(s, "  wall extent: {:?} m, detector: {:?} m", w.extent, w.detector_origin);
        let _ = writeln!(s, "  max: {:e}, total: {:e}", c.max_value(), c.total());
        return Ok(s);
    }
    if n == 8 && &magic == checkpoint::MAGIC {
        let ck = checkpoint::load(path).map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let _ = writeln!(s, "checkpoint {}", path.display());
        let _ = writeln!(s, "  stage: {}", ck.sidecar.stage.as_deref().unwrap_or("none"));
        let _ = writeln!(s, "  epochs completed: {}, optimizer steps: {}", ck.sidecar.epochs_completed, ck.sidecar.adam_step);
        let _ = writeln!(s, "  parameters: {}", ck.model.params().num_scalars());
        let _ = writeln!(s, "  model: {}", serde_json::to_string(ck.model.config()).expect("config serialises"));
        return Ok(s);
    }
    let cfg = RunConfig::load(path)?;
    let _ = writeln!(s, "valid run config {}", path.display());
    s.push_str(&cfg.to_json());
    Ok(s)
}

pub fn info(cfg: &RunConfig, path: Option<&Path>) -> Result<()> {
    print!("{}", describe(cfg, path)?);
    Ok(())
}
