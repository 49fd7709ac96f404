//! Built-in experiment configurations, shipped as files under `presets/`.

/// `(name, config text)` for every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("ex_1d_dw", include_str!("../../presets/ex_1d_dw.cfg")),
    ("ex_2d_dw", include_str!("../../presets/ex_2d_dw.cfg")),
    ("ex_2d_log", include_str!("../../presets/ex_2d_log.cfg")),
    ("ex_2d_logdeg", include_str!("../../presets/ex_2d_logdeg.cfg")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
