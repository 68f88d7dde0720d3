#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::imaging::{preprocess, PreprocessParams};
use linebench::Raster;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = Raster::decode_png(data) {
        if img.width() * img.height() <= 1 << 16 {
            let _ = preprocess(&img, &PreprocessParams::default());
        }
    }
});
