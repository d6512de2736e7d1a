use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured snapshot of a scene. Positions are in meters, base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub gripper: [f64; 3],
    pub jaw: f64,
    pub object: Option<[f64; 3]>,
    pub attached: bool,
    pub goal: [f64; 3],
    /// Reward of the step that produced this frame; `None` right after reset.
    pub reward: Option<f64>,
}

/// Writes frames as newline-delimited JSON.
pub fn write_frames<W: Write>(mut out: W, frames: &[Frame]) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_frames<R: BufRead>(input: R) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            what: "frame log",
            line: i + 1,
            reason: e.to_string(),
        })?;
        frames.push(frame);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn frames_round_trip(
            step in 0usize..1000,
            g in prop::array::uniform3(-1e3f64..1e3),
            o in prop::option::of(prop::array::uniform3(-1e3f64..1e3)),
            jaw in 0.0f64..=1.0,
            attached: bool,
            reward in prop::option::of(prop_oneof![Just(-1.0), Just(0.0)]),
        ) {
            let frames = vec![Frame { step, gripper: g, jaw, object: o, attached, goal: g, reward }];
            let mut buf = Vec::new();
            write_frames(&mut buf, &frames).unwrap();
            prop_assert_eq!(read_frames(buf.as_slice()).unwrap(), frames);
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = b"{\"step\":0,\"gripper\":[0,0,0],\"jaw\":1,\"object\":null,\"attached\":false,\"goal\":[0,0,0],\"reward\":null}\nnope\n";
        match read_frames(&text[..]) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
