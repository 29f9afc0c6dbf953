//! Field boundary representations and the reference converters.
//!
//! Two document shapes are supported: the provider-style boundary JSON
//! (`values[].multipolygons[].rings[].points[]` with named `lat`/`lon`) and a
//! GeoJSON `FeatureCollection` whose polygon coordinates are `[lon, lat]`
//! pairs. All numeric values travel as [`Dec`], which keeps the source digit
//! string so no float round trip ever touches an area or a coordinate.

use std::fmt;
use std::str::FromStr;

use bigdecimal::{BigDecimal, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::DatasetVersion;
use crate::error::{Error, Result};

/// Hectares to international acres: 10000 m² / 4046.8564224 m².
pub const HECTARES_TO_ACRES: &str = "2.471053814671653";

/// Sphere radius used for ring areas, in metres.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// A decimal number carried as its JSON digit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dec(String);

impl Dec {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_big(&self) -> BigDecimal {
        BigDecimal::from_str(&self.0).expect("Dec holds a valid number")
    }

    /// Shortest round-tripping representation of a finite float.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite number {x}")));
        }
        Self::from_str(&format!("{x}"))
    }

    pub fn from_big(x: &BigDecimal) -> Self {
        Dec(x.to_plain_string())
    }

    /// Float approximation, for geometry computations only.
    pub fn to_f64(&self) -> f64 {
        self.0.parse().expect("Dec holds a valid number")
    }
}

impl FromStr for Dec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // Must be a valid JSON number lexeme.
        match serde_json::from_str::<serde_json::Value>(s) {
            Ok(serde_json::Value::Number(_)) if s.trim() == s => Ok(Dec(s.to_string())),
            _ => Err(Error::invalid(format!("not a JSON number: {s:?}"))),
        }
    }
}

impl fmt::Display for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = serde_json::Number::from_str(&self.0).map_err(serde::ser::Error::custom)?;
        n.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = serde_json::Number::deserialize(d)?;
        Ok(Dec(n.to_string()))
    }
}

/// One position, longitude first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Position {
    pub lon: Dec,
    pub lat: Dec,
}

impl Position {
    pub fn new(lon: Dec, lat: Dec) -> Self {
        Self { lon, lat }
    }
}

/// A field boundary in representation-neutral form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldBoundary {
    pub id: String,
    pub name: String,
    pub source_type: String,
    pub created_time: String,
    pub modified_time: String,
    /// Closed rings of a single polygon; the first ring is the exterior.
    pub rings: Vec<Vec<Position>>,
    pub area_ha: Dec,
}

impl FieldBoundary {
    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::Document("boundary has no rings".into()));
        }
        for ring in &self.rings {
            if ring.len() < 4 {
                return Err(Error::DegenerateRing(format!(
                    "ring has {} positions, need at least 4",
                    ring.len()
                )));
            }
            if ring.first() != ring.last() {
                return Err(Error::DegenerateRing("ring is not closed".into()));
            }
            for p in ring {
                let (lon, lat) = (p.lon.to_f64(), p.lat.to_f64());
                if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                    return Err(Error::Document(format!("position ({lon}, {lat}) out of range")));
                }
            }
        }
        if !self.area_ha.to_big().is_positive() {
            return Err(Error::Document("area_ha must be positive".into()));
        }
        Ok(())
    }
}

/// Converts hectares to acres with a single exact multiplication.
pub fn hectares_to_acres(ha: &Dec) -> Result<Dec> {
    let x = ha.to_big();
    if x.is_negative() {
        return Err(Error::invalid(format!("negative area {ha}")));
    }
    if x.is_zero() {
        return Ok(Dec("0".to_string()));
    }
    let factor = BigDecimal::from_str(HECTARES_TO_ACRES).expect("constant");
    Ok(Dec::from_big(&(x * factor)))
}

/// Area enclosed by a closed ring on a sphere of radius [`EARTH_RADIUS_M`],
/// in hectares. Orientation does not matter.
pub fn ring_area_ha(ring: &[Position]) -> Result<f64> {
    if ring.len() < 4 {
        return Err(Error::DegenerateRing(format!(
            "{} positions, need at least 4",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(Error::DegenerateRing("ring is not closed".into()));
    }
    let pts: Vec<(f64, f64)> = ring[..ring.len() - 1]
        .iter()
        .map(|p| (p.lon.to_f64().to_radians(), p.lat.to_f64().to_radians()))
        .collect();
    let mut distinct = pts.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateRing(format!(
            "{} distinct positions, need at least 3",
            distinct.len()
        )));
    }
    let n = pts.len();
    let sum: f64 = (0..n)
        .map(|i| {
            let (prev, _) = pts[(i + n - 1) % n];
            let (next, _) = pts[(i + 1) % n];
            (next - prev) * pts[i].1.sin()
        })
        .sum();
    Ok((sum * EARTH_RADIUS_M * EARTH_RADIUS_M / 2.0).abs() / 10_000.0)
}

// ---------------------------------------------------------------------------
// Provider representation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderBoundaryDoc {
    pub values: Vec<ProviderBoundary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProviderBoundary {
    #[serde(rename = "@type")]
    pub kind: String,
    pub id: String,
    pub name: String,
    pub source_type: String,
    pub created_time: String,
    pub modified_time: String,
    pub area: Measurement,
    pub workable_area: Measurement,
    #[serde(default)]
    pub multipolygons: Vec<ProviderPolygon>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Measurement {
    #[serde(rename = "@type")]
    pub kind: String,
    pub value_as_double: Dec,
    pub unit: String,
}

impl Measurement {
    fn hectares(value: Dec) -> Self {
        Self {
            kind: "MeasurementAsDouble".into(),
            value_as_double: value,
            unit: "ha".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderPolygon {
    #[serde(rename = "@type")]
    pub kind: String,
    #[serde(default)]
    pub rings: Vec<ProviderRing>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRing {
    #[serde(rename = "@type")]
    pub kind: String,
    #[serde(default)]
    pub points: Vec<ProviderPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderPoint {
    #[serde(rename = "@type")]
    pub kind: String,
    pub lat: Dec,
    pub lon: Dec,
}

impl ProviderBoundaryDoc {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(format!("provider document: {e}")))
    }

    pub fn to_pretty_json(&self) -> String {
        to_pretty(self)
    }
}

/// Emits the provider representation of a boundary.
pub fn boundary_to_provider(b: &FieldBoundary) -> ProviderBoundaryDoc {
    let rings = b
        .rings
        .iter()
        .map(|ring| ProviderRing {
            kind: "Ring".into(),
            points: ring
                .iter()
                .map(|p| ProviderPoint {
                    kind: "Point".into(),
                    lat: p.lat.clone(),
                    lon: p.lon.clone(),
                })
                .collect(),
        })
        .collect();
    ProviderBoundaryDoc {
        values: vec![ProviderBoundary {
            kind: "Boundary".into(),
            id: b.id.clone(),
            name: b.name.clone(),
            source_type: b.source_type.clone(),
            created_time: b.created_time.clone(),
            modified_time: b.modified_time.clone(),
            area: Measurement::hectares(b.area_ha.clone()),
            workable_area: Measurement::hectares(b.area_ha.clone()),
            multipolygons: vec![ProviderPolygon {
                kind: "Polygon".into(),
                rings,
            }],
        }],
    }
}

// ---------------------------------------------------------------------------
// GeoJSON representation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoFeatureDoc {
    #[serde(rename = "type")]
    pub kind: String,
    pub features: Vec<GeoFeature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoFeature {
    #[serde(rename = "type")]
    pub kind: String,
    pub properties: GeoProperties,
    pub geometry: Geometry,
}

/// Feature properties; which keys are present depends on the dataset version.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_ha: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_acres: Option<Dec>,
}

impl GeoProperties {
    /// The dataset version whose property set this is, if any.
    pub fn version(&self) -> Option<DatasetVersion> {
        match (&self.id, &self.area_ha, &self.area_acres) {
            (None, None, None) => Some(DatasetVersion::V1),
            (Some(_), None, None) => Some(DatasetVersion::V2),
            (Some(_), Some(_), None) => Some(DatasetVersion::V3),
            (Some(_), None, Some(_)) => Some(DatasetVersion::V4),
            _ => None,
        }
    }
}

pub type Ring = Vec<[Dec; 2]>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Geometry {
    Polygon { coordinates: Vec<Ring> },
    MultiPolygon { coordinates: Vec<Vec<Ring>> },
}

impl GeoFeatureDoc {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(format!("geojson document: {e}")))
    }

    pub fn to_pretty_json(&self) -> String {
        to_pretty(self)
    }

    /// Version implied by the first feature's property keys.
    pub fn version(&self) -> Option<DatasetVersion> {
        self.features.first().and_then(|f| f.properties.version())
    }
}

fn swap_ring(ring: &ProviderRing) -> Ring {
    ring.points
        .iter()
        .map(|p| [p.lon.clone(), p.lat.clone()])
        .collect()
}

/// Reference converter from the provider representation to GeoJSON for the
/// given dataset version. Fields the version does not ask for are dropped.
pub fn provider_to_geo_reference(
    doc: &ProviderBoundaryDoc,
    version: DatasetVersion,
) -> Result<GeoFeatureDoc> {
    provider_to_geo_with(doc, version, hectares_to_acres)
}

/// Same as [`provider_to_geo_reference`] with a caller-supplied unit conversion.
pub(crate) fn provider_to_geo_with(
    doc: &ProviderBoundaryDoc,
    version: DatasetVersion,
    to_acres: impl Fn(&Dec) -> Result<Dec>,
) -> Result<GeoFeatureDoc> {
    if doc.values.is_empty() {
        return Err(Error::Document("provider document has no boundaries".into()));
    }
    let mut features = Vec::with_capacity(doc.values.len());
    for b in &doc.values {
        let polygons: Vec<Vec<Ring>> = b
            .multipolygons
            .iter()
            .filter(|p| !p.rings.is_empty())
            .map(|p| p.rings.iter().map(swap_ring).collect())
            .collect();
        if polygons.is_empty() || polygons.iter().flatten().any(|r| r.is_empty()) {
            return Err(Error::Document(format!("boundary {} has no geometry", b.id)));
        }
        if b.area.unit != "ha" {
            return Err(Error::Document(format!(
                "boundary {}: unsupported area unit {:?}",
                b.id, b.area.unit
            )));
        }
        let area = &b.area.value_as_double;
        let properties = match version {
            DatasetVersion::V1 => GeoProperties::default(),
            DatasetVersion::V2 => GeoProperties {
                id: Some(b.id.clone()),
                ..Default::default()
            },
            DatasetVersion::V3 => GeoProperties {
                id: Some(b.id.clone()),
                area_ha: Some(area.clone()),
                ..Default::default()
            },
            DatasetVersion::V4 => GeoProperties {
                id: Some(b.id.clone()),
                area_acres: Some(to_acres(area)?),
                ..Default::default()
            },
        };
        let geometry = if polygons.len() == 1 {
            Geometry::Polygon {
                coordinates: polygons.into_iter().next().expect("one polygon"),
            }
        } else {
            Geometry::MultiPolygon {
                coordinates: polygons,
            }
        };
        features.push(GeoFeature {
            kind: "Feature".into(),
            properties,
            geometry,
        });
    }
    Ok(GeoFeatureDoc {
        kind: "FeatureCollection".into(),
        features,
    })
}

/// Parses a provider document and converts it, returning pretty JSON text.
pub fn convert_provider_text(input: &str, version: DatasetVersion) -> Result<String> {
    let doc = ProviderBoundaryDoc::parse(input)?;
    Ok(provider_to_geo_reference(&doc, version)?.to_pretty_json())
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn listing_boundary() -> FieldBoundary {
        let ring = vec![
            Position::new(d("10.16014"), d("52.330802")),
            Position::new(d("10.155896"), d("52.330026")),
            Position::new(d("10.156"), d("52.3312")),
            Position::new(d("10.16014"), d("52.330802")),
        ];
        FieldBoundary {
            id: "e2a217d3-d261-4f1b-9a7e-a719002ed933".into(),
            name: "Unique_Boundary_name".into(),
            source_type: "HandDrawn".into(),
            created_time: "2018-07-01T21:00:11Z".into(),
            modified_time: "2018-11-16T15:43:27.496Z".into(),
            rings: vec![ring],
            area_ha: d("0.0921547167479482"),
        }
    }

    #[test]
    fn dec_rejects_non_numbers() {
        assert!("abc".parse::<Dec>().is_err());
        assert!(" 1".parse::<Dec>().is_err());
        assert!("1.".parse::<Dec>().is_err());
        assert_eq!(d("1e2").as_str(), "1e2");
        assert_eq!(Dec::from_f64(0.1).unwrap().as_str(), "0.1");
        assert!(Dec::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn acres_conversion() {
        assert_eq!(hectares_to_acres(&d("0")).unwrap().to_big(), BigDecimal::zero());
        assert_eq!(hectares_to_acres(&d("1")).unwrap().as_str(), "2.471053814671653");
        let a = hectares_to_acres(&d("0.0921547167479482")).unwrap();
        assert!(a.as_str().starts_with("0.2277192"), "{a}");
        assert!(hectares_to_acres(&d("-1")).is_err());
    }

    #[test]
    fn acres_factor_is_the_rounded_international_acre_ratio() {
        let exact = BigDecimal::from(10_000) / BigDecimal::from_str("4046.8564224").unwrap();
        let rounded = exact.with_scale_round(15, bigdecimal::RoundingMode::HalfEven);
        assert_eq!(rounded.to_plain_string(), HECTARES_TO_ACRES);
    }

    #[test]
    fn equatorial_quadrangle_area_matches_spherical_zone() {
        let ring: Vec<Position> = [("0", "0"), ("1", "0"), ("1", "1"), ("0", "1"), ("0", "0")]
            .iter()
            .map(|(lo, la)| Position::new(d(lo), d(la)))
            .collect();
        let area = ring_area_ha(&ring).unwrap();
        let r = EARTH_RADIUS_M;
        let zone = r * r * 1f64.to_radians() * (1f64.to_radians().sin() - 0f64.sin()) / 1e4;
        assert!(((area - zone) / zone).abs() < 1e-3, "{area} vs {zone}");
        assert!(((area - 1_239_202.0) / 1_239_202.0).abs() < 1e-3);

        let mut rev = ring.clone();
        rev.reverse();
        assert_eq!(ring_area_ha(&rev).unwrap(), area);
    }

    #[test]
    fn degenerate_rings_are_rejected() {
        let p = |lo: &str, la: &str| Position::new(d(lo), d(la));
        let ring = vec![p("1", "1"), p("2", "2"), p("2", "2"), p("1", "1")];
        assert!(matches!(ring_area_ha(&ring), Err(Error::DegenerateRing(_))));
        assert!(ring_area_ha(&ring[..3]).is_err());
        let open = vec![p("0", "0"), p("1", "0"), p("1", "1"), p("0", "1")];
        assert!(ring_area_ha(&open).is_err());
    }

    #[test]
    fn provider_document_mirrors_the_listing() {
        let doc = boundary_to_provider(&listing_boundary());
        let text = doc.to_pretty_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let b = &v["values"][0];
        assert_eq!(b["@type"], "Boundary");
        assert_eq!(b["area"]["@type"], "MeasurementAsDouble");
        assert_eq!(b["area"]["unit"], "ha");
        assert_eq!(b["workableArea"]["valueAsDouble"], b["area"]["valueAsDouble"]);
        assert!(text.contains("\"valueAsDouble\": 0.0921547167479482"));
        let p = &b["multipolygons"][0]["rings"][0]["points"][0];
        assert_eq!(p["@type"], "Point");
        assert_eq!(p["lat"].to_string(), "52.330802");
        assert_eq!(p["lon"].to_string(), "10.16014");
        // lat is emitted before lon
        let first_point = &text[text.find("\"Point\"").unwrap()..];
        assert!(first_point.find("\"lat\"").unwrap() < first_point.find("\"lon\"").unwrap());
        assert_eq!(ProviderBoundaryDoc::parse(&text).unwrap(), doc);
    }

    #[test]
    fn empty_name_is_preserved() {
        let mut b = listing_boundary();
        b.name = String::new();
        assert_eq!(boundary_to_provider(&b).values[0].name, "");
    }

    #[test]
    fn reference_conversion_per_version() {
        let doc = boundary_to_provider(&listing_boundary());
        let v1 = provider_to_geo_reference(&doc, DatasetVersion::V1).unwrap();
        assert!(v1.to_pretty_json().contains("\"properties\": {}"));
        let Geometry::Polygon { coordinates } = &v1.features[0].geometry else {
            panic!("expected polygon")
        };
        assert_eq!(coordinates[0][0], [d("10.16014"), d("52.330802")]);

        let v2 = provider_to_geo_reference(&doc, DatasetVersion::V2).unwrap();
        assert_eq!(
            v2.features[0].properties.id.as_deref(),
            Some("e2a217d3-d261-4f1b-9a7e-a719002ed933")
        );
        assert_eq!(v2.version(), Some(DatasetVersion::V2));

        let v3 = provider_to_geo_reference(&doc, DatasetVersion::V3).unwrap();
        assert_eq!(
            v3.features[0].properties.area_ha.as_ref().unwrap().as_str(),
            "0.0921547167479482"
        );

        let v4 = provider_to_geo_reference(&doc, DatasetVersion::V4).unwrap();
        let text = v4.to_pretty_json();
        assert!(text.contains("area_acres") && !text.contains("area_ha"));
        assert_eq!(GeoFeatureDoc::parse(&text).unwrap(), v4);
    }

    #[test]
    fn reference_conversion_errors() {
        let mut doc = boundary_to_provider(&listing_boundary());
        doc.values[0].area.unit = "ac".into();
        assert!(provider_to_geo_reference(&doc, DatasetVersion::V1).is_err());
        let mut doc = boundary_to_provider(&listing_boundary());
        doc.values[0].multipolygons.clear();
        assert!(provider_to_geo_reference(&doc, DatasetVersion::V1).is_err());
    }

    #[test]
    fn multiple_polygons_become_a_multipolygon() {
        let mut doc = boundary_to_provider(&listing_boundary());
        let poly = doc.values[0].multipolygons[0].clone();
        doc.values[0].multipolygons.push(poly);
        let geo = provider_to_geo_reference(&doc, DatasetVersion::V1).unwrap();
        assert!(matches!(geo.features[0].geometry, Geometry::MultiPolygon { .. }));
    }
}
