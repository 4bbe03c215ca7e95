//! JIGSAWS kinematics format: one frame per line, 76 whitespace-separated
//! decimal columns — four 19-column manipulator blocks (master left, master
//! right, slave left, slave right), each laid out as 3 position + 9 rotation
//! (row-major) + 3 linear velocity + 3 angular velocity + 1 gripper angle.

use super::{Arm, DataError, KinematicFrame, Trial, TrialSource};

pub const JIGSAWS_COLUMNS: usize = 76;
pub const JIGSAWS_SAMPLE_RATE: f64 = 30.0;

const ROTATION_TOLERANCE: f64 = 1e-3;

/// A parsed rotation block that is not orthonormal within tolerance.
/// Reported, never fatal: real recordings drift slightly.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationWarning {
    /// 1-based line number in the source text.
    pub line: usize,
    /// Worst entry deviation of RᵀR from the identity.
    pub orthogonality_deviation: f64,
    /// |det(R) − 1|.
    pub determinant_deviation: f64,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub trial: Trial,
    pub warnings: Vec<RotationWarning>,
}

/// Parse JIGSAWS kinematics text, extracting one manipulator block.
pub fn parse_jigsaws(text: &str, arm: Arm) -> Result<ParseOutcome, DataError> {
    let mut frames = Vec::new();
    let mut warnings = Vec::new();
    let mut values = Vec::with_capacity(JIGSAWS_COLUMNS);

    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        values.clear();
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| DataError::Parse {
                line: line_no,
                reason: format!("non-numeric token {token:?}"),
            })?;
            values.push(v);
        }
        if values.len() != JIGSAWS_COLUMNS {
            return Err(DataError::ColumnCount {
                line: line_no,
                found: values.len(),
            });
        }

        let b = arm.column_offset();
        let position = [values[b], values[b + 1], values[b + 2]];
        let rotation = [
            [values[b + 3], values[b + 4], values[b + 5]],
            [values[b + 6], values[b + 7], values[b + 8]],
            [values[b + 9], values[b + 10], values[b + 11]],
        ];
        let linear_velocity = [values[b + 12], values[b + 13], values[b + 14]];
        let angular_velocity = [values[b + 15], values[b + 16], values[b + 17]];
        let gripper_angle = values[b + 18];

        if let Some(w) = rotation_warning(line_no, &rotation) {
            warnings.push(w);
        }
        frames.push(KinematicFrame {
            index: frames.len(),
            position,
            rotation,
            linear_velocity,
            angular_velocity,
            gripper_angle,
        });
    }

    Ok(ParseOutcome {
        trial: Trial {
            frames,
            sample_rate: JIGSAWS_SAMPLE_RATE,
            source: TrialSource::JigsawsFile,
            arm: Some(arm),
        },
        warnings,
    })
}

fn rotation_warning(line: usize, r: &[[f64; 3]; 3]) -> Option<RotationWarning> {
    let mut ortho_dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            // (RᵀR)ᵢⱼ = column i · column j
            let mut dot = 0.0;
            for k in 0..3 {
                dot += r[k][i] * r[k][j];
            }
            let want = if i == j { 1.0 } else { 0.0 };
            ortho_dev = ortho_dev.max((dot - want).abs());
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    let det_dev = (det - 1.0).abs();
    if ortho_dev > ROTATION_TOLERANCE || det_dev > ROTATION_TOLERANCE {
        Some(RotationWarning {
            line,
            orthogonality_deviation: ortho_dev,
            determinant_deviation: det_dev,
        })
    } else {
        None
    }
}

/// Serialize a trial into the 76-column layout. The trial's own arm block
/// carries its data; the other three blocks are zero-filled. Values print
/// in Rust's shortest round-trip notation, so parsing the output recovers
/// the frames bit-exactly.
pub fn serialize_jigsaws(trial: &Trial) -> String {
    let arm = trial.arm.unwrap_or(Arm::SlaveLeft);
    let offset = arm.column_offset();
    let mut out = String::new();
    let mut cols = [0.0f64; JIGSAWS_COLUMNS];
    for frame in &trial.frames {
        cols.fill(0.0);
        cols[offset..offset + 3].copy_from_slice(&frame.position);
        for (i, row) in frame.rotation.iter().enumerate() {
            cols[offset + 3 + 3 * i..offset + 6 + 3 * i].copy_from_slice(row);
        }
        cols[offset + 12..offset + 15].copy_from_slice(&frame.linear_velocity);
        cols[offset + 15..offset + 18].copy_from_slice(&frame.angular_velocity);
        cols[offset + 18] = frame.gripper_angle;

        for (i, v) in cols.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_trial, SyntheticConfig};

    fn line_of_zeros() -> String {
        vec!["0"; JIGSAWS_COLUMNS].join(" ")
    }

    #[test]
    fn all_zero_line_parses_with_rotation_warning() {
        let out = parse_jigsaws(&line_of_zeros(), Arm::SlaveLeft).unwrap();
        assert_eq!(out.trial.len(), 1);
        let f = &out.trial.frames[0];
        assert_eq!(f.position, [0.0; 3]);
        assert_eq!(f.linear_velocity, [0.0; 3]);
        assert_eq!(f.gripper_angle, 0.0);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].line, 1);
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let good = line_of_zeros();
        let bad = vec!["0"; 75].join(" ");
        let text = format!("{good}\n{bad}\n");
        let err = parse_jigsaws(&text, Arm::SlaveLeft).unwrap_err();
        match err {
            DataError::ColumnCount { line, found } => {
                assert_eq!(line, 2);
                assert_eq!(found, 75);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_token_names_the_line() {
        let mut cols = vec!["0".to_string(); JIGSAWS_COLUMNS];
        cols[40] = "abc".to_string();
        let err = parse_jigsaws(&cols.join(" "), Arm::SlaveLeft).unwrap_err();
        match err {
            DataError::Parse { line, reason } => {
                assert_eq!(line, 1);
                assert!(reason.contains("abc"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn arm_offsets_select_distinct_blocks() {
        let mut cols = vec!["0".to_string(); JIGSAWS_COLUMNS];
        cols[0] = "1.5".into(); // master-left x
        cols[19] = "2.5".into(); // master-right x
        cols[38] = "3.5".into(); // slave-left x
        cols[57] = "4.5".into(); // slave-right x
        let text = cols.join(" ");
        for (arm, want) in [
            (Arm::MasterLeft, 1.5),
            (Arm::MasterRight, 2.5),
            (Arm::SlaveLeft, 3.5),
            (Arm::SlaveRight, 4.5),
        ] {
            let out = parse_jigsaws(&text, arm).unwrap();
            assert_eq!(out.trial.frames[0].position[0], want);
        }
    }

    #[test]
    fn identity_rotation_produces_no_warning() {
        let mut cols = vec!["0".to_string(); JIGSAWS_COLUMNS];
        // Slave-left rotation block = identity.
        for (i, c) in [41, 45, 49].iter().enumerate() {
            let _ = i;
            cols[*c] = "1".into();
        }
        let out = parse_jigsaws(&cols.join(" "), Arm::SlaveLeft).unwrap();
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn serialize_then_parse_round_trips_bit_exactly() {
        let trial = generate_synthetic_trial(
            &SyntheticConfig {
                duration_s: 2.0,
                ..SyntheticConfig::default()
            },
            99,
        )
        .unwrap();
        let text = serialize_jigsaws(&trial);
        // Synthetic trials have no arm; the serializer defaults to slave-left.
        let out = parse_jigsaws(&text, Arm::SlaveLeft).unwrap();
        assert_eq!(out.trial.frames, trial.frames);
        assert!(out.warnings.is_empty(), "synthetic rotations are orthonormal");
    }
}
