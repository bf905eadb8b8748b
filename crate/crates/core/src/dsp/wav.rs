use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use super::{DspError, Waveform};

const I16_SCALE: f32 = 32768.0;

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn map_hound(err: hound::Error) -> DspError {
    match err {
        hound::Error::IoError(e) => DspError::Io(e.to_string()),
        hound::Error::Unsupported => DspError::UnsupportedFormat("unsupported WAV encoding".into()),
        other => DspError::UnsupportedFormat(other.to_string()),
    }
}

/// Maps a sample in `[-1, 1]` to 16-bit PCM: `round(x * 32768)` clamped to the
/// i16 range. Inverse of the `/ 32768` used on read for every i16 value.
pub fn to_pcm16(x: f32) -> i16 {
    let v = (x.clamp(-1.0, 1.0) * I16_SCALE).round();
    v.clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

pub fn from_pcm16(s: i16) -> f32 {
    s as f32 / I16_SCALE
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<Waveform, DspError> {
    let mut reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DspError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(DspError::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit linear PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(from_pcm16))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, DspError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DspError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_wav_from(std::io::BufReader::new(file))
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<Waveform, DspError> {
    read_wav_from(Cursor::new(bytes))
}

pub fn write_wav_to<W: Write + Seek>(writer: W, w: &Waveform) -> Result<(), DspError> {
    let mut out = hound::WavWriter::new(writer, wav_spec(w.sample_rate)).map_err(map_hound)?;
    {
        let mut samples = out.get_i16_writer(w.samples.len() as u32);
        for &x in &w.samples {
            samples.write_sample(to_pcm16(x));
        }
        samples.flush().map_err(map_hound)?;
    }
    out.finalize().map_err(map_hound)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), DspError> {
    let file = std::fs::File::create(path.as_ref())
        .map_err(|e| DspError::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_wav_to(std::io::BufWriter::new(file), w)
}

pub fn wav_bytes(w: &Waveform) -> Result<Vec<u8>, DspError> {
    let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * w.samples.len()));
    write_wav_to(&mut cursor, w)?;
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pcm_scaling() {
        assert_eq!(from_pcm16(16384), 0.5);
        assert_eq!(from_pcm16(i16::MIN), -1.0);
        assert_eq!(to_pcm16(0.5), 16384);
        assert_eq!(to_pcm16(1.0), i16::MAX);
        assert_eq!(to_pcm16(-3.0), i16::MIN);
    }

    #[test]
    fn canonical_header() {
        let w = Waveform::new(vec![0.0, 0.5, -0.5], 16_000).unwrap();
        let bytes = wav_bytes(&w).unwrap();
        assert_eq!(bytes.len(), 44 + 6);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 36 + 6);
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 16);
        assert_eq!(u16::from_le_bytes(bytes[20..22].try_into().unwrap()), 1); // PCM
        assert_eq!(u16::from_le_bytes(bytes[22..24].try_into().unwrap()), 1); // mono
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 16_000);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 32_000);
        assert_eq!(u16::from_le_bytes(bytes[32..34].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(bytes[34..36].try_into().unwrap()), 16);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 6);
        assert_eq!(&bytes[44..], &[0, 0, 0, 0x40, 0, 0xc0]);
    }

    #[test]
    fn random_buffer_round_trips_byte_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pcm: Vec<i16> = (0..4000).map(|_| rng.gen()).collect();
        let w = Waveform::new(pcm.iter().map(|&s| from_pcm16(s)).collect(), 16_000).unwrap();
        let bytes = wav_bytes(&w).unwrap();
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(wav_bytes(&back).unwrap(), bytes);
        let raw: Vec<i16> = bytes[44..]
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(raw, pcm);
    }

    #[test]
    fn rejects_stereo_and_float() {
        let mut buf = Cursor::new(Vec::new());
        {
            let spec = hound::WavSpec {
                channels: 2,
                ..wav_spec(16_000)
            };
            let mut wr = hound::WavWriter::new(&mut buf, spec).unwrap();
            wr.write_sample(0i16).unwrap();
            wr.write_sample(0i16).unwrap();
            wr.finalize().unwrap();
        }
        assert!(matches!(
            read_wav_bytes(buf.get_ref()),
            Err(DspError::UnsupportedFormat(_))
        ));

        let mut buf = Cursor::new(Vec::new());
        {
            let spec = hound::WavSpec {
                channels: 1,
                sample_rate: 16_000,
                bits_per_sample: 32,
                sample_format: hound::SampleFormat::Float,
            };
            let mut wr = hound::WavWriter::new(&mut buf, spec).unwrap();
            wr.write_sample(0.25f32).unwrap();
            wr.finalize().unwrap();
        }
        assert!(matches!(
            read_wav_bytes(buf.get_ref()),
            Err(DspError::UnsupportedFormat(_))
        ));
        assert!(read_wav_bytes(b"not a wav file at all").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_wav("/definitely/not/here.wav"),
            Err(DspError::Io(_))
        ));
    }
}
