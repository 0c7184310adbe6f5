use super::{Segment, UtteranceRecord};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::video::Image;
use std::path::Path;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::format(self.path, self.pos as u64, msg)
    }
}

/// Mono 16-bit PCM at 16 kHz.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    let data_len = (w.len() * 2) as u32;
    let mut b = Vec::with_capacity(44 + data_len as usize);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&w.sample_rate.to_le_bytes());
    b.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        b.extend_from_slice(&q.to_le_bytes());
    }
    write_bytes(path, &b)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = read_bytes(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::format(path, 0, "missing RIFF tag"));
    }
    r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::format(path, 8, "missing WAVE tag"));
    }
    let mut format = None;
    loop {
        let id = r.take(4, "chunk id")?;
        let len = r.u32("chunk size")? as usize;
        match id {
            b"fmt " => {
                let start = r.pos;
                let (fmt, ch, rate) = (r.u16("format")?, r.u16("channels")?, r.u32("sample rate")?);
                r.u32("byte rate")?;
                r.u16("block align")?;
                let bits = r.u16("bit depth")?;
                if fmt != 1 || ch != 1 || bits != 16 {
                    return Err(Error::format(path, start as u64, format!("need mono 16-bit PCM, got format {fmt}, {ch} channels, {bits} bits")));
                }
                if rate != SAMPLE_RATE {
                    return Err(Error::format(path, start as u64 + 4, format!("sample rate {rate}, expected {SAMPLE_RATE}")));
                }
                r.take(len - 16, "fmt extension")?;
                format = Some(rate);
            }
            b"data" => {
                let rate = format.ok_or_else(|| r.fail("data chunk before fmt chunk"))?;
                if len % 2 != 0 {
                    return Err(r.fail("odd data length"));
                }
                let raw = r.take(len, "sample data")?;
                let samples = raw
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return Waveform::new(samples, rate);
            }
            _ => {
                r.take(len + len % 2, "unknown chunk")?;
            }
        }
    }
}

const AVF_MAGIC: &[u8; 4] = b"AVSF";
const AVF_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvfHeader {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: u64,
}

/// Grayscale frames, one unsigned byte per pixel.
pub fn write_avf(frames: &[Image], fps: (u32, u32), path: &Path) -> Result<()> {
    let (w, h) = frames.first().map_or((0, 0), |f| (f.width, f.height));
    let mut b = Vec::with_capacity(32 + frames.len() * w * h);
    b.extend_from_slice(AVF_MAGIC);
    for v in [AVF_VERSION, w as u32, h as u32, fps.0, fps.1] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(frames.len() as u64).to_le_bytes());
    for f in frames {
        if f.width != w || f.height != h || f.channels != 1 {
            return Err(Error::Dimension("frames differ in size or are not grayscale".into()));
        }
        b.extend(f.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    write_bytes(path, &b)
}

pub fn read_avf(path: &Path) -> Result<(AvfHeader, Vec<Image>)> {
    let bytes = read_bytes(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4, "magic")? != AVF_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected AVSF"));
    }
    let version = r.u32("version")?;
    if version != AVF_VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}")));
    }
    let header = AvfHeader {
        width: r.u32("width")?,
        height: r.u32("height")?,
        fps_num: r.u32("fps numerator")?,
        fps_den: r.u32("fps denominator")?,
        frame_count: r.u64("frame count")?,
    };
    if header.fps_num == 0 || header.fps_den == 0 {
        return Err(Error::format(path, 16, "zero frame rate"));
    }
    let size = header.width as usize * header.height as usize;
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for i in 0..header.frame_count {
        let px = r.take(size, &format!("frame {i}"))?;
        frames.push(Image::gray(
            header.width as usize,
            header.height as usize,
            px.iter().map(|&v| v as f64 / 255.0).collect(),
        )?);
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last frame"));
    }
    Ok((header, frames))
}

pub fn write_labels(segments: &[Segment], path: &Path) -> Result<()> {
    let mut s = String::new();
    for seg in segments {
        let tag = if seg.speech { "speech" } else { "nonspeech" };
        s.push_str(&format!("{:.3}\t{:.3}\t{tag}\n", seg.start, seg.end));
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<Segment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Segment> = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: String| Error::format(path, offset, m);
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", cols.len())));
        }
        let start: f64 = cols[0].parse().map_err(|_| bad(format!("bad start time {:?}", cols[0])))?;
        let end: f64 = cols[1].parse().map_err(|_| bad(format!("bad end time {:?}", cols[1])))?;
        let speech = match cols[2] {
            "speech" => true,
            "nonspeech" => false,
            other => return Err(bad(format!("unknown label {other:?}"))),
        };
        if end < start || out.last().is_some_and(|p| start < p.end - 1e-9) {
            return Err(bad("segments overlap or are out of order".into()));
        }
        out.push(Segment { start, end, speech });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

pub fn write_manifest(records: &[UtteranceRecord], path: &Path) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialise"));
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0u64;
    let mut out = Vec::new();
    for line in text.lines() {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| Error::format(path, offset, e.to_string()))?);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0, 0.5, -1.0, 32767.0 / 32768.0, -3.0 / 32768.0], 16_000).unwrap();
        write_wav(&w, &p).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..47]).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn avf_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.avf");
        let frames: Vec<Image> = (0..3)
            .map(|k| Image::gray(4, 2, (0..8).map(|i| ((i * 30 + k) % 256) as f64 / 255.0).collect()).unwrap())
            .collect();
        write_avf(&frames, (30, 1), &p).unwrap();
        let (h, back) = read_avf(&p).unwrap();
        assert_eq!((h.width, h.height, h.frame_count), (4, 2, 3));
        assert_eq!(back, frames);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        match read_avf(&p) {
            Err(Error::Format { offset, msg, .. }) => {
                assert_eq!(offset, bytes.len() as u64 - 3);
                assert!(msg.contains("frame 2"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn labels_round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        let segs = vec![
            Segment { start: 0.0, end: 1.25, speech: false },
            Segment { start: 1.25, end: 3.0, speech: true },
        ];
        write_labels(&segs, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0.000\t1.250\tnonspeech\n1.250\t3.000\tspeech\n");
        assert_eq!(read_labels(&p).unwrap(), segs);
        std::fs::write(&p, "0.0\t2.0\tspeech\n1.0\t3.0\tnonspeech\n").unwrap();
        assert!(read_labels(&p).is_err());
    }
}
