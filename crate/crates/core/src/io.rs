//! File formats: truth and trajectory CSV, sensor JSON-Lines, and the
//! `# config=... seed=...` header every output starts with.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::experiment::{Estimator, TrackPoint};
use crate::sim::{FrameParseError, SensorFrame};
use crate::world::{Pose2D, TimedPose};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Frame { line: usize, source: FrameParseError },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
}

/// Provenance line written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn line(&self) -> String {
        format!("# config={} seed={}", self.config_hash, self.seed)
    }
}

pub fn write_frames(mut w: impl Write, header: &Header, frames: &[SensorFrame]) -> std::io::Result<()> {
    writeln!(w, "{}", header.line())?;
    for f in frames {
        writeln!(w, "{}", f.to_json_line())?;
    }
    Ok(())
}

/// Reads a JSON-Lines frame log. Blank lines and `#` comments are skipped;
/// errors carry the 1-based line number.
pub fn read_frames(r: impl BufRead) -> Result<Vec<SensorFrame>, IoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let frame = SensorFrame::from_json_line(trimmed).map_err(|source| IoError::Frame { line: i + 1, source })?;
        out.push(frame);
    }
    Ok(out)
}

pub fn write_truth(mut w: impl Write, header: &Header, truth: &[TimedPose]) -> std::io::Result<()> {
    writeln!(w, "{}", header.line())?;
    writeln!(w, "t,x,y,theta")?;
    for s in truth {
        writeln!(w, "{},{},{},{}", s.t, s.pose.x, s.pose.y, s.pose.theta)?;
    }
    Ok(())
}

pub fn write_track(
    mut w: impl Write,
    header: &Header,
    estimator: Estimator,
    track: &[TrackPoint],
) -> std::io::Result<()> {
    writeln!(w, "{}", header.line())?;
    match estimator {
        Estimator::Pf => {
            writeln!(w, "t,x,y,theta,n_matched,degenerate_flag")?;
            for p in track {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    p.t, p.pose.x, p.pose.y, p.pose.theta, p.n_matched, p.quality as u8
                )?;
            }
        }
        Estimator::Lasernav => {
            writeln!(w, "t,x,y,theta,n_matched,residual_rms")?;
            for p in track {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    p.t, p.pose.x, p.pose.y, p.pose.theta, p.n_matched, p.quality
                )?;
            }
        }
        Estimator::Deadreckon => {
            writeln!(w, "t,x,y,theta")?;
            for p in track {
                writeln!(w, "{},{},{},{}", p.t, p.pose.x, p.pose.y, p.pose.theta)?;
            }
        }
    }
    Ok(())
}

/// Reads any pose CSV with `t,x,y,theta` columns (extra columns ignored).
pub fn read_poses(r: impl std::io::Read) -> Result<Vec<TimedPose>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(IoError::MissingColumn(name))
    };
    let idx = [col("t")?, col("x")?, col("y")?, col("theta")?];
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut vals = [0.0; 4];
        for (v, &i) in vals.iter_mut().zip(&idx) {
            let field = rec.get(i).ok_or_else(|| IoError::Csv {
                line,
                reason: "short row".into(),
            })?;
            *v = field.parse().map_err(|_| IoError::Csv {
                line,
                reason: format!("`{field}` is not a number"),
            })?;
        }
        let pose = Pose2D::try_new(vals[1], vals[2], vals[3]).map_err(|e| IoError::Csv {
            line,
            reason: e.to_string(),
        })?;
        out.push(TimedPose { t: vals[0], pose });
    }
    Ok(out)
}

fn csv_error(e: &csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    IoError::Csv {
        line,
        reason: e.to_string(),
    }
}

/// Per-timestamp error table, one column per estimator; blank where an
/// estimator has no output at that instant.
pub fn write_error_table(
    mut w: impl Write,
    header: &Header,
    names: &[String],
    rows: &[(f64, Vec<Option<f64>>)],
) -> std::io::Result<()> {
    writeln!(w, "{}", header.line())?;
    write!(w, "t")?;
    for n in names {
        write!(w, ",{n}_err_mm")?;
    }
    writeln!(w)?;
    for (t, cells) in rows {
        write!(w, "{t}")?;
        for c in cells {
            match c {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LrfScan, Odometry, Payload};
    use crate::world::ReflectorDetection;

    fn header() -> Header {
        Header {
            config_hash: "abc".into(),
            seed: 7,
        }
    }

    #[test]
    fn frames_round_trip() {
        let frames = vec![
            SensorFrame {
                t: 0.1,
                payload: Payload::Odometry(Odometry {
                    w_l: 1.0 / 3.0,
                    w_r: 2.5,
                    gyro_w: -0.1,
                }),
            },
            SensorFrame {
                t: 0.45,
                payload: Payload::LrfScan(LrfScan {
                    detections: vec![ReflectorDetection::new(5.25, 0.1).unwrap()],
                }),
            },
        ];
        let mut buf = Vec::new();
        write_frames(&mut buf, &header(), &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config=abc seed=7\n"));
        assert_eq!(read_frames(&buf[..]).unwrap(), frames);
    }

    #[test]
    fn malformed_frame_reports_line() {
        let log = "# config=x seed=1\n{\"t\":0.1,\"odo\":{\"wl\":1,\"wr\":1,\"gyro\":0}}\n{\"t\":0.2,\"odo\":{}}\n";
        match read_frames(log.as_bytes()) {
            Err(IoError::Frame { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_frames("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn truth_round_trip() {
        let truth: Vec<TimedPose> = (0..5)
            .map(|i| TimedPose {
                t: i as f64 * 0.01,
                pose: Pose2D::new(1.0 + i as f64 / 7.0, 2.0, 0.3 * i as f64),
            })
            .collect();
        let mut buf = Vec::new();
        write_truth(&mut buf, &header(), &truth).unwrap();
        assert_eq!(read_poses(&buf[..]).unwrap(), truth);
    }

    #[test]
    fn track_columns() {
        let p = TrackPoint {
            t: 0.45,
            pose: Pose2D::new(1.0, 2.0, 0.5),
            n_matched: 4,
            quality: 1.0,
        };
        for (e, cols) in [
            (Estimator::Pf, "t,x,y,theta,n_matched,degenerate_flag"),
            (Estimator::Lasernav, "t,x,y,theta,n_matched,residual_rms"),
            (Estimator::Deadreckon, "t,x,y,theta"),
        ] {
            let mut buf = Vec::new();
            write_track(&mut buf, &header(), e, &[p]).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert_eq!(text.lines().nth(1), Some(cols));
            let back = read_poses(&buf[..]).unwrap();
            assert_eq!(back, vec![p.timed()]);
        }
    }

    #[test]
    fn bad_csv_value_reports_line() {
        let text = "# h\nt,x,y,theta\n0,1,2,0\n0.1,oops,2,0\n";
        match read_poses(text.as_bytes()) {
            Err(IoError::Csv { line, reason }) => {
                assert_eq!(line, 4);
                assert!(reason.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_poses("t,x,y\n".as_bytes()),
            Err(IoError::MissingColumn("theta"))
        ));
    }
}
