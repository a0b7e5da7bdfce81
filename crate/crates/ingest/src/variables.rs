/// The 27 base variables requested per grid point (OpenMeteo names).
pub const DEFAULT_VARIABLES: [&str; 27] = [
    "temperature_2m",
    "apparent_temperature",
    "cloud_cover",
    "cloud_cover_low",
    "cloud_cover_mid",
    "cloud_cover_high",
    "wind_speed_10m",
    "wind_speed_80m",
    "wind_direction_10m",
    "wind_direction_80m",
    "wind_gusts_10m",
    "relative_humidity_2m",
    "dew_point_2m",
    "vapour_pressure_deficit",
    "et0_fao_evapotranspiration",
    "precipitation",
    "freezing_level_height",
    "weather_code",
    "cape",
    "shortwave_radiation",
    "shortwave_radiation_instant",
    "direct_radiation",
    "direct_radiation_instant",
    "direct_normal_irradiance_instant",
    "diffuse_radiation",
    "diffuse_radiation_instant",
    "terrestrial_radiation_instant",
];

/// Variables used as forecast targets.
pub const LABEL_VARIABLES: [&str; 3] = ["temperature_2m", "wind_speed_10m", "cloud_cover"];
