const FIXTURES: &[(&str, &str)] = &[
    ("crossborder_auth", include_str!("../../scenarios/crossborder_auth.scn")),
    ("signature_lifecycle", include_str!("../../scenarios/signature_lifecycle.scn")),
    ("edelivery_lossy", include_str!("../../scenarios/edelivery_lossy.scn")),
    ("health_end_to_end", include_str!("../../scenarios/health_end_to_end.scn")),
    ("s4h_options_1_to_4", include_str!("../../scenarios/s4h_options_1_to_4.scn")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
