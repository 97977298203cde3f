//! G-code decoding into connected toolpath segments.
//!
//! The supported dialect is the subset emitted by mainstream FDM slicers:
//! `G0`/`G1` linear moves, `G90`/`G91` positioning modes, `G92` position
//! resets, `M82`/`M83` extruder modes, `G21` (millimeters) and `G28` homing.
//! Comments may be `;` to end of line or parenthesized. Any other command is
//! tolerated and ignored. Arcs (`G2`/`G3`) and inch units (`G20`) are rejected.

use thiserror::Error;

/// Errors produced while decoding G-code. Line numbers are 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcodeError {
    #[error("line {line}: malformed numeric field '{field}'")]
    MalformedNumber { line: usize, field: String },
    #[error("line {line}: unsupported command {command}")]
    Unsupported { line: usize, command: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Absolute,
    Relative,
}

/// Interpreter state carried across lines.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    /// Machine position in mm. `G92` offsets are folded in so that this never
    /// jumps without a motion segment.
    pub position: [f64; 3],
    /// Logical extruder position in mm of filament.
    pub extruder_pos: f64,
    pub positioning_mode: Mode,
    pub extruder_mode: Mode,
    /// Logical minus machine coordinates, set by `G92 X/Y/Z`.
    offset: [f64; 3],
    feedrate: Option<f64>,
    motion: Motion,
}

impl Default for MachineState {
    fn default() -> Self {
        MachineState {
            position: [0.0; 3],
            extruder_pos: 0.0,
            positioning_mode: Mode::Absolute,
            extruder_mode: Mode::Absolute,
            offset: [0.0; 3],
            feedrate: None,
            motion: Motion::Rapid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Motion {
    Rapid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolpathSegment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub extruding: bool,
    /// Modal feedrate in mm/min, if one has been set.
    pub feedrate: Option<f64>,
}

impl ToolpathSegment {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }
}

/// Axis-aligned box in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    fn point(p: [f64; 3]) -> Self {
        Aabb { min: p, max: p }
    }

    fn grow(&mut self, p: [f64; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Toolpath {
    pub segments: Vec<ToolpathSegment>,
    /// Bounds of all extruding segment endpoints; `None` when nothing extrudes.
    pub bounds: Option<Aabb>,
}

impl Toolpath {
    pub fn from_segments(segments: Vec<ToolpathSegment>) -> Self {
        let mut bounds: Option<Aabb> = None;
        for s in segments.iter().filter(|s| s.extruding) {
            for p in [s.start, s.end] {
                match bounds.as_mut() {
                    Some(b) => b.grow(p),
                    None => bounds = Some(Aabb::point(p)),
                }
            }
        }
        Toolpath { segments, bounds }
    }

    pub fn extruding(&self) -> impl Iterator<Item = &ToolpathSegment> {
        self.segments.iter().filter(|s| s.extruding)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolpathStats {
    pub segments: usize,
    pub extruding_length: f64,
    pub bounds: Option<Aabb>,
}

pub fn toolpath_stats(tp: &Toolpath) -> ToolpathStats {
    ToolpathStats {
        segments: tp.segments.len(),
        extruding_length: tp.extruding().map(ToolpathSegment::length).sum(),
        bounds: tp.bounds,
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// A single `<letter><number>` word. The number stays as text until the
/// command is known, so that arguments of unknown commands are never judged.
struct Word<'a> {
    letter: char,
    text: &'a str,
}

fn strip_comments(line: &str) -> String {
    let line = line.split(';').next().unwrap_or("");
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    for c in line.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    // drop a trailing "*checksum"
    match out.find('*') {
        Some(i) => out[..i].to_string(),
        None => out,
    }
}

fn split_words(code: &str) -> Vec<Word<'_>> {
    let mut words = Vec::new();
    let bytes = code.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && !(bytes[j] as char).is_ascii_alphabetic() {
                j += 1;
            }
            words.push(Word {
                letter: c.to_ascii_uppercase(),
                text: code[start..j].trim(),
            });
            i = j;
        } else {
            // stray characters (e.g. '%' program markers) form their own word
            let start = i;
            while i < bytes.len() && !(bytes[i] as char).is_ascii_alphabetic() {
                i += 1;
            }
            words.push(Word {
                letter: '?',
                text: code[start..i].trim(),
            });
        }
    }
    words
}

/// Strict G-code number: optional sign, digits, optional fraction. No exponent.
fn parse_number(text: &str) -> Option<f64> {
    let t = text.strip_prefix(['+', '-']).unwrap_or(text);
    if t.is_empty() || t == "." {
        return None;
    }
    let mut dots = 0;
    for c in t.chars() {
        match c {
            '0'..='9' => {}
            '.' => dots += 1,
            _ => return None,
        }
    }
    if dots > 1 {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Default)]
struct Args {
    axes: [Option<f64>; 3],
    e: Option<f64>,
    f: Option<f64>,
}

impl Args {
    fn has_axis(&self) -> bool {
        self.axes.iter().any(Option::is_some)
    }
}

fn parse_args(words: &[Word<'_>], line: usize) -> Result<Args, GcodeError> {
    let mut args = Args::default();
    for w in words {
        let slot = match w.letter {
            'X' => &mut args.axes[0],
            'Y' => &mut args.axes[1],
            'Z' => &mut args.axes[2],
            'E' => &mut args.e,
            'F' => &mut args.f,
            _ => continue,
        };
        let v = parse_number(w.text).ok_or_else(|| GcodeError::MalformedNumber {
            line,
            field: format!("{}{}", w.letter, w.text),
        })?;
        *slot = Some(v);
    }
    Ok(args)
}

fn code_number(w: &Word<'_>, line: usize) -> Result<u32, GcodeError> {
    // "G1.0" style codes are accepted when integral; subcodes are not.
    let v = parse_number(w.text).ok_or_else(|| GcodeError::MalformedNumber {
        line,
        field: format!("{}{}", w.letter, w.text),
    })?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(GcodeError::Unsupported {
            line,
            command: format!("{}{}", w.letter, w.text),
        });
    }
    Ok(v as u32)
}

impl MachineState {
    fn apply_move(&mut self, args: &Args, motion: Motion, out: &mut Vec<ToolpathSegment>) {
        let start = self.position;
        let mut end = start;
        for a in 0..3 {
            if let Some(v) = args.axes[a] {
                end[a] = match self.positioning_mode {
                    Mode::Absolute => v - self.offset[a],
                    Mode::Relative => start[a] + v,
                };
            }
        }
        let mut advance = 0.0;
        if let Some(e) = args.e {
            advance = match self.extruder_mode {
                Mode::Absolute => e - self.extruder_pos,
                Mode::Relative => e,
            };
            self.extruder_pos += advance;
        }
        if let Some(f) = args.f {
            self.feedrate = Some(f);
        }
        let extruding = motion == Motion::Linear && advance > 0.0;
        if extruding || end != start {
            out.push(ToolpathSegment {
                start,
                end,
                extruding,
                feedrate: self.feedrate,
            });
        }
        self.position = end;
    }

    fn apply_home(&mut self, words: &[Word<'_>], out: &mut Vec<ToolpathSegment>) {
        let named: Vec<usize> = words
            .iter()
            .filter_map(|w| match w.letter {
                'X' => Some(0),
                'Y' => Some(1),
                'Z' => Some(2),
                _ => None,
            })
            .collect();
        let start = self.position;
        let mut end = start;
        for a in 0..3 {
            if named.is_empty() || named.contains(&a) {
                end[a] = 0.0;
                self.offset[a] = 0.0;
            }
        }
        if end != start {
            out.push(ToolpathSegment {
                start,
                end,
                extruding: false,
                feedrate: self.feedrate,
            });
        }
        self.position = end;
    }

    fn apply_set_position(&mut self, args: &Args) {
        if !args.has_axis() && args.e.is_none() {
            for a in 0..3 {
                self.offset[a] = -self.position[a];
            }
            self.extruder_pos = 0.0;
            return;
        }
        for a in 0..3 {
            if let Some(v) = args.axes[a] {
                self.offset[a] = v - self.position[a];
            }
        }
        if let Some(e) = args.e {
            self.extruder_pos = e;
        }
    }
}

/// Decode G-code text into a toolpath, starting from the printer reset state
/// (origin, absolute positioning, absolute extrusion, E = 0).
pub fn parse_gcode(text: &str) -> Result<Toolpath, GcodeError> {
    let mut state = MachineState::default();
    let mut segments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        parse_line(&mut state, raw, idx + 1, &mut segments)?;
    }
    Ok(Toolpath::from_segments(segments))
}

fn parse_line(
    state: &mut MachineState,
    raw: &str,
    line: usize,
    out: &mut Vec<ToolpathSegment>,
) -> Result<(), GcodeError> {
    let code = strip_comments(raw);
    let words: Vec<Word<'_>> = split_words(&code)
        .into_iter()
        .filter(|w| w.letter != 'N')
        .collect();
    if words.is_empty() {
        return Ok(());
    }

    let first = &words[0];
    match first.letter {
        'G' => {
            let g = code_number(first, line)?;
            match g {
                0 | 1 => {
                    let motion = if g == 0 { Motion::Rapid } else { Motion::Linear };
                    state.motion = motion;
                    let args = parse_args(&words[1..], line)?;
                    state.apply_move(&args, motion, out);
                }
                2 | 3 => {
                    return Err(GcodeError::Unsupported {
                        line,
                        command: format!("G{g} (arc moves are not supported)"),
                    })
                }
                20 => {
                    return Err(GcodeError::Unsupported {
                        line,
                        command: "G20 (inch units are not supported)".into(),
                    })
                }
                21 => {}
                28 => state.apply_home(&words[1..], out),
                90 => {
                    state.positioning_mode = Mode::Absolute;
                    state.extruder_mode = Mode::Absolute;
                }
                91 => {
                    state.positioning_mode = Mode::Relative;
                    state.extruder_mode = Mode::Relative;
                }
                92 => {
                    let args = parse_args(&words[1..], line)?;
                    state.apply_set_position(&args);
                }
                _ => {}
            }
        }
        'M' => match code_number(first, line)? {
            82 => state.extruder_mode = Mode::Absolute,
            83 => state.extruder_mode = Mode::Relative,
            _ => {}
        },
        'X' | 'Y' | 'Z' | 'E' => {
            // bare coordinates continue the modal motion command
            let args = parse_args(&words, line)?;
            let motion = state.motion;
            state.apply_move(&args, motion, out);
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_connected(tp: &Toolpath) {
        for w in tp.segments.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn empty_input() {
        let tp = parse_gcode("").unwrap();
        assert!(tp.segments.is_empty());
        assert!(tp.bounds.is_none());
    }

    #[test]
    fn absolute_single_move() {
        let tp = parse_gcode("G90\nG1 X10 Y0 Z0 E1.0").unwrap();
        assert_eq!(tp.segments.len(), 1);
        let s = tp.segments[0];
        assert_eq!(s.start, [0.0, 0.0, 0.0]);
        assert_eq!(s.end, [10.0, 0.0, 0.0]);
        assert!(s.extruding);
    }

    #[test]
    fn relative_moves_chain() {
        // hand trace: G91 makes X and E relative; each line advances x by 5
        // and E by 0.5, so both are extruding and the second starts at x = 5
        let tp = parse_gcode("G91\nG1 X5 E0.5\nG1 X5 E0.5").unwrap();
        assert_eq!(tp.segments.len(), 2);
        assert_eq!(tp.segments[0].start, [0.0, 0.0, 0.0]);
        assert_eq!(tp.segments[0].end, [5.0, 0.0, 0.0]);
        assert_eq!(tp.segments[1].start, [5.0, 0.0, 0.0]);
        assert_eq!(tp.segments[1].end, [10.0, 0.0, 0.0]);
        assert!(tp.segments.iter().all(|s| s.extruding));
    }

    #[test]
    fn rapid_never_extrudes() {
        let tp = parse_gcode("G0 X5 E3").unwrap();
        assert_eq!(tp.segments.len(), 1);
        assert!(!tp.segments[0].extruding);
    }

    #[test]
    fn retraction_is_travel() {
        let tp = parse_gcode("G1 X1 E2\nG1 X2 E1\nG1 X3").unwrap();
        let flags: Vec<bool> = tp.segments.iter().map(|s| s.extruding).collect();
        assert_eq!(flags, vec![true, false, false]);
    }

    #[test]
    fn g92_resets_extruder_without_segment() {
        let tp = parse_gcode("G1 X1 E5\nG92 E0\nG1 X2 E1").unwrap();
        assert_eq!(tp.segments.len(), 2);
        assert!(tp.segments[1].extruding);
    }

    #[test]
    fn g92_axis_offset_keeps_connectivity() {
        let tp = parse_gcode("G1 X10 E1\nG92 X0\nG1 X5 E2").unwrap();
        assert_connected(&tp);
        assert_eq!(tp.segments[1].end, [15.0, 0.0, 0.0]);
    }

    #[test]
    fn m83_relative_extrusion() {
        let tp = parse_gcode("M83\nG1 X1 E0.2\nG1 X2 E0.2").unwrap();
        assert!(tp.segments.iter().all(|s| s.extruding));
    }

    #[test]
    fn dwell_deposit_and_feed_only() {
        let tp = parse_gcode("G1 F1200\nG1 E0.4").unwrap();
        assert_eq!(tp.segments.len(), 1);
        let s = tp.segments[0];
        assert_eq!(s.start, s.end);
        assert!(s.extruding);
        assert_eq!(s.feedrate, Some(1200.0));
    }

    #[test]
    fn comments_and_crlf() {
        let text = "; header\r\nG1 X1 (inline) E1 ; trailing\r\nM104 S200\r\nM117 Printing 3.0.x\r\n";
        let tp = parse_gcode(text).unwrap();
        assert_eq!(tp.segments.len(), 1);
        assert_eq!(tp.segments[0].end, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn packed_words() {
        let tp = parse_gcode("G1X2Y3E1").unwrap();
        assert_eq!(tp.segments[0].end, [2.0, 3.0, 0.0]);
    }

    #[test]
    fn modal_bare_coordinates() {
        let tp = parse_gcode("G1 X1 E1\nX2 E2").unwrap();
        assert_eq!(tp.segments.len(), 2);
        assert!(tp.segments[1].extruding);
    }

    #[test]
    fn malformed_number_reports_line() {
        let err = parse_gcode("G1 X1\nG1 X1..2 E1").unwrap_err();
        assert_eq!(
            err,
            GcodeError::MalformedNumber {
                line: 2,
                field: "X1..2".into()
            }
        );
    }

    #[test]
    fn arcs_rejected_with_line() {
        let err = parse_gcode("G1 X1\n\nG2 X2 Y2 I1 J0").unwrap_err();
        assert!(matches!(err, GcodeError::Unsupported { line: 3, .. }));
        assert!(matches!(
            parse_gcode("G20").unwrap_err(),
            GcodeError::Unsupported { line: 1, .. }
        ));
    }

    #[test]
    fn home_is_travel() {
        let tp = parse_gcode("G1 X5 Y5 E1\nG28").unwrap();
        assert_connected(&tp);
        assert_eq!(tp.segments.last().unwrap().end, [0.0; 3]);
        assert!(!tp.segments.last().unwrap().extruding);
    }

    #[test]
    fn stats() {
        let empty = toolpath_stats(&Toolpath::default());
        assert_eq!((empty.segments, empty.extruding_length), (0, 0.0));
        assert!(empty.bounds.is_none());

        let tp = parse_gcode("G1 X3 Y4 E1").unwrap();
        assert_eq!(toolpath_stats(&tp).extruding_length, 5.0);

        let tp = parse_gcode("G1 X5 E1\nG1 X10 E2").unwrap();
        let st = toolpath_stats(&tp);
        assert_eq!(st.extruding_length, 10.0);
        let b = st.bounds.unwrap();
        assert_eq!(b.min, [0.0; 3]);
        assert_eq!(b.max, [10.0, 0.0, 0.0]);
    }
}
