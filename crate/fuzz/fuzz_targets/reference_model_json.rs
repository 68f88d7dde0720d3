#![no_main]

use libfuzzer_sys::fuzz_target;

use linebench::engines::ReferenceModel;
use linebench::Raster;

fuzz_target!(|data: &str| {
    if let Ok(model) = ReferenceModel::from_json(data) {
        let line = Raster::from_gray_fn(24, 12, |x, y| if (x / 3 + y / 4) % 2 == 0 { 0 } else { 255 });
        let _ = model.recognize_detailed(&line);
    }
});
