//! Record content to 3-digit decimal groups, and the chunking of that digit
//! stream into fixed-width plaintext chunks.

use crate::{Error, Result, Stage};

/// Row-major RGB raster, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    rgb: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(Stage::EmrCodec, "image dimensions must be at least 1x1"));
        }
        let expected = width as usize * height as usize * 3;
        if rgb.len() != expected {
            return Err(Error::domain(
                Stage::EmrCodec,
                format!("{width}x{height} image needs {expected} channel bytes, got {}", rgb.len()),
            ));
        }
        Ok(Raster { width, height, rgb })
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[[u8; 3]]) -> Result<Self> {
        Raster::new(width, height, pixels.concat())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Interleaved channel bytes: R, G, B of pixel 0, then pixel 1, ...
    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// A plain e-MR: text bytes and an optional colour image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EmrPayload {
    pub text: Vec<u8>,
    pub image: Option<Raster>,
}

impl EmrPayload {
    pub fn new(text: impl Into<Vec<u8>>, image: Option<Raster>) -> Self {
        EmrPayload { text: text.into(), image }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty() && self.image.is_none()
    }

    /// Raw size: one byte per text character plus three per pixel.
    pub fn plain_len(&self) -> usize {
        self.text.len() + self.image.as_ref().map_or(0, |img| img.rgb.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitStream {
    pub digits: String,
    pub text_byte_count: usize,
    pub image_dims: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSet {
    pub chunks: Vec<String>,
    pub total_digit_count: usize,
    pub chunk_width: usize,
}

impl ChunkSet {
    pub fn pad_count(&self) -> usize {
        self.chunks.len() * self.chunk_width - self.total_digit_count
    }
}

fn push_byte_digits(out: &mut String, b: u8) {
    out.push((b'0' + b / 100) as char);
    out.push((b'0' + (b / 10) % 10) as char);
    out.push((b'0' + b % 10) as char);
}

/// Each byte as exactly three decimal digits.
pub fn text_to_digits(text: &[u8]) -> String {
    let mut out = String::with_capacity(text.len() * 3);
    for &b in text {
        push_byte_digits(&mut out, b);
    }
    out
}

/// Pixels row-major, channels interleaved R, G, B, three digits per channel.
pub fn image_to_digits(image: &Raster) -> String {
    text_to_digits(&image.rgb)
}

pub fn payload_to_digits(payload: &EmrPayload) -> DigitStream {
    let mut digits = text_to_digits(&payload.text);
    if let Some(image) = &payload.image {
        digits.push_str(&image_to_digits(image));
    }
    DigitStream {
        digits,
        text_byte_count: payload.text.len(),
        image_dims: payload.image.as_ref().map(|img| (img.width, img.height)),
    }
}

/// Splits right-aligned into `chunk_width` pieces, padding the leftmost
/// chunk with leading `'0'`s.
pub fn chunkify(stream: &DigitStream, chunk_width: usize) -> Result<ChunkSet> {
    if chunk_width == 0 {
        return Err(Error::parameter(Stage::EmrCodec, "chunk width must be positive"));
    }
    let total = stream.digits.len();
    if total == 0 {
        return Err(Error::domain(Stage::EmrCodec, "cannot chunk an empty digit stream"));
    }
    let n_chunks = total.div_ceil(chunk_width);
    let pad = n_chunks * chunk_width - total;
    let mut padded = String::with_capacity(n_chunks * chunk_width);
    padded.extend(std::iter::repeat_n('0', pad));
    padded.push_str(&stream.digits);
    let chunks = padded
        .as_bytes()
        .chunks(chunk_width)
        .map(|c| String::from_utf8(c.to_vec()).expect("ascii digits"))
        .collect();
    Ok(ChunkSet { chunks, total_digit_count: total, chunk_width })
}

/// Concatenates chunks and strips exactly the recorded number of pad digits.
pub fn dechunkify(set: &ChunkSet) -> Result<String> {
    let width = set.chunk_width;
    if width == 0 || set.chunks.iter().any(|c| c.len() != width) {
        return Err(Error::corruption(Stage::EmrCodec, "chunks do not all have the recorded width"));
    }
    let capacity = set.chunks.len() * width;
    if set.total_digit_count > capacity || capacity - set.total_digit_count >= width {
        return Err(Error::corruption(
            Stage::EmrCodec,
            format!("{} chunks of width {width} cannot hold {} digits", set.chunks.len(), set.total_digit_count),
        ));
    }
    let joined: String = set.chunks.concat();
    let pad = capacity - set.total_digit_count;
    if !joined.as_bytes()[..pad].iter().all(|&b| b == b'0') {
        return Err(Error::corruption(Stage::EmrCodec, "padding digits are not all '0'"));
    }
    Ok(joined[pad..].to_string())
}

/// Inverse of [`payload_to_digits`].
pub fn digits_to_payload(stream: &DigitStream) -> Result<EmrPayload> {
    let pixels = stream.image_dims.map_or(0, |(w, h)| w as usize * h as usize);
    let expected = 3 * stream.text_byte_count + 9 * pixels;
    if stream.digits.len() != expected {
        return Err(Error::corruption(
            Stage::EmrCodec,
            format!("expected {expected} digits, found {}", stream.digits.len()),
        ));
    }
    let mut bytes = Vec::with_capacity(expected / 3);
    for (i, group) in stream.digits.as_bytes().chunks(3).enumerate() {
        if !group.iter().all(u8::is_ascii_digit) {
            return Err(Error::corruption(Stage::EmrCodec, format!("non-digit in group {i}")));
        }
        let value = group.iter().fold(0u32, |acc, d| acc * 10 + (d - b'0') as u32);
        if value > 255 {
            return Err(Error::corruption(Stage::EmrCodec, format!("group {i} is {value}, above 255")));
        }
        bytes.push(value as u8);
    }
    let image_bytes = bytes.split_off(stream.text_byte_count);
    let image = match stream.image_dims {
        Some((w, h)) => Some(Raster::new(w, h, image_bytes).map_err(|e| Error::corruption(Stage::EmrCodec, e.to_string()))?),
        None => None,
    };
    Ok(EmrPayload { text: bytes, image })
}

/// A small demonstration record: a one-line note and a 3x3 colour image.
pub fn sample_record() -> EmrPayload {
    EmrPayload::new(&b"Patient Name: Alice"[..], Some(sample_image()))
}

/// The 3x3 image of [`sample_record`], pixels row-major.
pub fn sample_image() -> Raster {
    Raster::from_pixels(
        3,
        3,
        &[
            [160, 10, 240],
            [166, 16, 186],
            [171, 17, 191],
            [139, 19, 239],
            [179, 29, 199],
            [139, 39, 239],
            [166, 16, 206],
            [123, 13, 183],
            [64, 64, 244],
        ],
    )
    .expect("static 3x3 image")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example_text_digits() {
        assert_eq!(
            text_to_digits(b"Patient Name: Alice"),
            "080097116105101110116032078097109101058032065108105099101"
        );
    }

    #[test]
    fn worked_example_image_digits() {
        assert_eq!(
            image_to_digits(&sample_image()),
            "160010240166016186171017191139019239179029199139039239166016206123013183064064244"
        );
    }

    #[test]
    fn byte_range_endpoints() {
        assert_eq!(text_to_digits(&[]), "");
        assert_eq!(text_to_digits(&[0]), "000");
        assert_eq!(text_to_digits(&[255]), "255");
    }

    #[test]
    fn small_images() {
        let black = Raster::from_pixels(1, 1, &[[0, 0, 0]]).unwrap();
        assert_eq!(image_to_digits(&black), "000000000");
        let two = Raster::from_pixels(2, 1, &[[1, 2, 3], [4, 5, 6]]).unwrap();
        assert_eq!(image_to_digits(&two), "001002003004005006");
    }

    #[test]
    fn raster_validation() {
        assert!(Raster::new(0, 1, vec![]).is_err());
        assert!(Raster::new(2, 2, vec![0; 11]).is_err());
        assert_eq!(sample_image().pixel(2, 2), [64, 64, 244]);
    }

    #[test]
    fn payload_digits_text_then_image() {
        let payload = EmrPayload::new(&b"Patient Name: Alice"[..], Some(sample_image()));
        let stream = payload_to_digits(&payload);
        assert_eq!(stream.digits.len(), 57 + 81);
        assert!(stream.digits[..66].ends_with("105099101160010240"));
        assert_eq!(stream.text_byte_count, 19);
        assert_eq!(stream.image_dims, Some((3, 3)));

        let text_only = payload_to_digits(&EmrPayload::new(&b"hi"[..], None));
        assert_eq!(text_only.digits, "104105");
        assert_eq!(payload_to_digits(&EmrPayload::default()).digits, "");
    }

    #[test]
    fn chunking_examples() {
        let stream = |s: &str| DigitStream { digits: s.into(), text_byte_count: 0, image_dims: None };
        let set = chunkify(&stream("12345"), 6).unwrap();
        assert_eq!(set.chunks, ["012345"]);
        assert_eq!(set.total_digit_count, 5);
        assert_eq!(dechunkify(&set).unwrap(), "12345");

        let set = chunkify(&stream("123456"), 3).unwrap();
        assert_eq!(set.chunks, ["123", "456"]);
        assert_eq!(set.pad_count(), 0);

        assert!(matches!(chunkify(&stream(""), 3), Err(Error::Domain { .. })));
        assert!(chunkify(&stream("1"), 0).is_err());
    }

    #[test]
    fn worked_example_chunks() {
        let payload = EmrPayload::new(&b"Patient Name: Alice"[..], Some(sample_image()));
        let stream = payload_to_digits(&payload);
        let set = chunkify(&stream, 66).unwrap();
        assert_eq!(set.chunks.len(), 3);
        assert_eq!(set.pad_count(), 60);
        assert!(set.chunks[0].starts_with(&"0".repeat(60)));
        let restored = dechunkify(&set).unwrap();
        assert!(restored.starts_with("080097116"));
        assert_eq!(digits_to_payload(&DigitStream { digits: restored, ..stream }).unwrap(), payload);
    }

    #[test]
    fn count_based_pad_stripping_keeps_leading_zero_digits() {
        // 'P' renders as "080": greedy zero stripping would eat its leading 0.
        let stream = DigitStream { digits: "080".into(), text_byte_count: 1, image_dims: None };
        let set = chunkify(&stream, 5).unwrap();
        assert_eq!(set.chunks, ["00080"]);
        assert_eq!(dechunkify(&set).unwrap(), "080");
    }

    #[test]
    fn nonzero_padding_is_corruption() {
        let set = ChunkSet { chunks: vec!["10080".into()], total_digit_count: 3, chunk_width: 5 };
        assert!(matches!(dechunkify(&set), Err(Error::Corruption { .. })));
        let short = ChunkSet { chunks: vec!["1008".into()], total_digit_count: 3, chunk_width: 5 };
        assert!(dechunkify(&short).is_err());
        let too_many = ChunkSet { chunks: vec!["00000".into(), "00080".into()], total_digit_count: 3, chunk_width: 5 };
        assert!(dechunkify(&too_many).is_err());
    }

    #[test]
    fn decoding_examples() {
        let stream = DigitStream {
            digits: "080097116105101110116032078097109101058032065108105099101".into(),
            text_byte_count: 19,
            image_dims: None,
        };
        assert_eq!(digits_to_payload(&stream).unwrap().text, b"Patient Name: Alice");

        let bad = DigitStream { digits: "256".into(), text_byte_count: 1, image_dims: None };
        assert!(matches!(digits_to_payload(&bad), Err(Error::Corruption { .. })));
        let short = DigitStream { digits: "25".into(), text_byte_count: 1, image_dims: None };
        assert!(matches!(digits_to_payload(&short), Err(Error::Corruption { .. })));
    }

    pub(crate) fn arb_payload(max_text: usize, max_side: u32) -> impl Strategy<Value = EmrPayload> {
        let image = (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
            prop::collection::vec(any::<u8>(), (w * h * 3) as usize)
                .prop_map(move |rgb| Raster::new(w, h, rgb).unwrap())
        });
        (prop::collection::vec(any::<u8>(), 0..max_text), prop::option::of(image))
            .prop_map(|(text, image)| EmrPayload { text, image })
    }

    proptest! {
        #[test]
        fn payload_digits_round_trip(payload in arb_payload(200, 8)) {
            let stream = payload_to_digits(&payload);
            prop_assert_eq!(stream.digits.len(), payload.plain_len() * 3);
            prop_assert_eq!(digits_to_payload(&stream).unwrap(), payload);
        }

        #[test]
        fn chunk_round_trip(digits in "[0-9]{1,400}", width in 1usize..80) {
            let stream = DigitStream { digits: digits.clone(), text_byte_count: 0, image_dims: None };
            let set = chunkify(&stream, width).unwrap();
            prop_assert!(set.chunks.iter().all(|c| c.len() == width));
            prop_assert!(set.pad_count() < width);
            prop_assert_eq!(dechunkify(&set).unwrap(), digits);
        }
    }
}
