//! Per-frame salient regions: threshold the saliency map, then cluster the
//! surviving points on the sphere with DBSCAN under the great-circle metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, erp_to_spherical, spherical_to_erp, vec3, SphericalPoint};
use crate::saliency::SaliencyMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientPoint {
    pub position: SphericalPoint,
    pub erp_px: usize,
    pub erp_py: usize,
    pub intensity: u8,
}

/// One DBSCAN cluster of salient points in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SalientRegion {
    pub frame_index: usize,
    pub points: Vec<SalientPoint>,
    /// Intensity-weighted mean direction.
    pub centroid_sph: SphericalPoint,
    /// `centroid_sph` in full-resolution ERP pixel coordinates.
    pub centroid_erp: (f64, f64),
    pub peak_intensity: u8,
    pub mean_intensity: f64,
}

/// Serializable digest of a [`SalientRegion`] without its point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub frame_index: usize,
    pub centroid_sph: SphericalPoint,
    pub centroid_erp: (f64, f64),
    pub point_count: usize,
    pub peak_intensity: u8,
    pub mean_intensity: f64,
}

impl SalientRegion {
    pub fn summary(&self) -> RegionSummary {
        RegionSummary {
            frame_index: self.frame_index,
            centroid_sph: self.centroid_sph,
            centroid_erp: self.centroid_erp,
            point_count: self.points.len(),
            peak_intensity: self.peak_intensity,
            mean_intensity: self.mean_intensity,
        }
    }
}

/// Anything with a position the tracker can link across frames.
pub trait RegionLocation {
    fn centroid_erp(&self) -> (f64, f64);
    fn centroid_sph(&self) -> SphericalPoint;
}

impl RegionLocation for SalientRegion {
    fn centroid_erp(&self) -> (f64, f64) {
        self.centroid_erp
    }

    fn centroid_sph(&self) -> SphericalPoint {
        self.centroid_sph
    }
}

impl RegionLocation for RegionSummary {
    fn centroid_erp(&self) -> (f64, f64) {
        self.centroid_erp
    }

    fn centroid_sph(&self) -> SphericalPoint {
        self.centroid_sph
    }
}

/// Pixels strictly brighter than `t1`, in row-major order.
pub fn threshold_points(map: &SaliencyMap, t1: u8) -> Vec<SalientPoint> {
    let (w, h) = map.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if v > t1 {
                out.push(SalientPoint {
                    position: erp_to_spherical(x, y, w, h).expect("pixel in range"),
                    erp_px: x,
                    erp_py: y,
                    intensity: v,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Member indices (into the input slice) of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

impl Clustering {
    /// Cluster id per input point, `None` for noise.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = Some(c);
            }
        }
        labels
    }
}

/// DBSCAN over unit vectors, visiting points in slice order.
///
/// Neighborhoods are closed balls (`distance <= eps`) that include the point
/// itself. Border points reachable from several clusters join the cluster
/// that was discovered first. Clusters are returned ordered by their smallest
/// member index.
pub fn dbscan_unit_vectors(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Result<Clustering> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::invalid("min_pts must be >= 1"));
    }
    let n = points.len();
    let cos_eps = eps.min(std::f64::consts::PI).cos();
    // Dot products decide all but a thin band around the boundary, where
    // the exact great-circle distance is used.
    let within = |a: usize, b: usize| -> bool {
        let d = vec3::dot(points[a], points[b]);
        if d > cos_eps + 1e-9 {
            true
        } else if d < cos_eps - 1e-9 {
            false
        } else {
            geometry::vector_angle(points[a], points[b]) <= eps
        }
    };
    // Core status only needs `min_pts` hits, so the scan stops early.
    let mut core: Vec<Option<bool>> = vec![None; n];
    let mut is_core = |i: usize| -> bool {
        *core[i].get_or_insert_with(|| {
            let mut hits = 0;
            (0..n).any(|j| {
                hits += usize::from(within(i, j));
                hits >= min_pts
            })
        })
    };

    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNVISITED; n];
    let mut cluster_count = 0;
    // Points not yet in any cluster. Membership of a cluster does not depend
    // on expansion order, so expanding a core point only has to look at
    // these.
    let mut unclaimed: Vec<usize> = (0..n).collect();
    let mut queue = Vec::new();

    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        if !is_core(i) {
            label[i] = NOISE;
            continue;
        }
        let c = cluster_count;
        cluster_count += 1;
        label[i] = c;
        queue.clear();
        queue.push(i);
        while let Some(j) = queue.pop() {
            // Border points join the cluster but do not propagate it.
            if !is_core(j) {
                continue;
            }
            unclaimed.retain(|&k| {
                if label[k] != UNVISITED && label[k] != NOISE {
                    return false;
                }
                if !within(j, k) {
                    return true;
                }
                if label[k] == UNVISITED {
                    queue.push(k);
                }
                label[k] = c;
                false
            });
        }
    }

    let mut clusters = vec![Vec::new(); cluster_count];
    let mut noise = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        if l == NOISE {
            noise.push(i);
        } else {
            clusters[l].push(i);
        }
    }
    clusters.sort_by_key(|m| m[0]);
    Ok(Clustering { clusters, noise })
}

/// DBSCAN over salient points with the great-circle metric. Points are
/// processed in canonical row-major pixel order whatever the input order;
/// indices in the result refer to the input slice.
pub fn dbscan_spherical(points: &[SalientPoint], eps: f64, min_pts: usize) -> Result<Clustering> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (points[i].erp_py, points[i].erp_px));
    let vectors: Vec<[f64; 3]> = order.iter().map(|&i| points[i].position.to_unit_vector()).collect();
    let canonical = dbscan_unit_vectors(&vectors, eps, min_pts)?;
    let remap = |v: &Vec<usize>| -> Vec<usize> {
        let mut out: Vec<usize> = v.iter().map(|&k| order[k]).collect();
        out.sort_unstable();
        out
    };
    Ok(Clustering {
        clusters: canonical.clusters.iter().map(remap).collect(),
        noise: remap(&canonical.noise),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub t1: u8,
    /// DBSCAN radius in radians.
    pub t2: f64,
    pub min_pts: usize,
    /// Integer box-downscale applied to the map before thresholding.
    pub downscale: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            t1: 150,
            t2: 1.2,
            min_pts: 5,
            downscale: 1,
        }
    }
}

/// Threshold the map, then cluster its salient pixels into regions.
pub fn extract_regions(frame_index: usize, map: &SaliencyMap, params: &RegionParams) -> Result<Vec<SalientRegion>> {
    let (full_w, full_h) = map.dims();
    let work = map.downscale(params.downscale)?;
    let points = threshold_points(&work, params.t1);
    let clustering = dbscan_spherical(&points, params.t2, params.min_pts)?;
    Ok(clustering
        .clusters
        .iter()
        .map(|members| {
            let pts: Vec<SalientPoint> = members.iter().map(|&i| points[i]).collect();
            build_region(frame_index, pts, full_w, full_h)
        })
        .collect())
}

fn build_region(frame_index: usize, points: Vec<SalientPoint>, width: usize, height: usize) -> SalientRegion {
    let mut acc = [0.0; 3];
    let mut sum = 0.0;
    let mut peak = 0u8;
    let mut brightest = points[0];
    for p in &points {
        let w = p.intensity as f64;
        acc = vec3::add(acc, vec3::scale(p.position.to_unit_vector(), w));
        sum += w;
        if p.intensity > peak {
            peak = p.intensity;
            brightest = *p;
        }
    }
    let centroid_sph = if vec3::norm(acc) < 1e-12 * sum.max(1.0) {
        brightest.position
    } else {
        SphericalPoint::from_vector(acc)
    };
    SalientRegion {
        frame_index,
        centroid_erp: spherical_to_erp(&centroid_sph, width, height),
        centroid_sph,
        peak_intensity: peak,
        mean_intensity: sum / points.len() as f64,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::great_circle_distance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn point(lat: f64, lon: f64, px: usize, py: usize) -> SalientPoint {
        SalientPoint {
            position: SphericalPoint::new(lat, lon).unwrap(),
            erp_px: px,
            erp_py: py,
            intensity: 200,
        }
    }

    /// O(n^2) reference: distance matrix, core graph components, border
    /// points attached to the adjacent component with the smallest core index.
    pub(crate) fn reference_dbscan(points: &[SphericalPoint], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
        let n = points.len();
        let adj: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| great_circle_distance(&points[i], &points[j]) <= eps).collect())
            .collect();
        let core: Vec<bool> = adj.iter().map(|row| row.iter().filter(|&&b| b).count() >= min_pts).collect();
        let mut comp = vec![usize::MAX; n];
        for s in 0..n {
            if !core[s] || comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = s;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if core[j] && adj[i][j] && comp[j] == usize::MAX {
                        comp[j] = s;
                        stack.push(j);
                    }
                }
            }
        }
        for i in 0..n {
            if !core[i] {
                comp[i] = (0..n).filter(|&j| core[j] && adj[i][j]).map(|j| comp[j]).min().unwrap_or(usize::MAX);
            }
        }
        // Renumber components by smallest member index.
        let mut first_member: Vec<(usize, usize)> = Vec::new();
        for &c in &comp {
            if c != usize::MAX && !first_member.iter().any(|&(k, _)| k == c) {
                first_member.push((c, first_member.len()));
            }
        }
        comp.iter()
            .map(|&k| first_member.iter().find(|&&(kk, _)| kk == k).map(|&(_, id)| id))
            .collect()
    }

    pub(crate) fn random_sphere_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<SphericalPoint> {
        (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                SphericalPoint::new(z.asin(), rng.random_range(-PI..PI)).unwrap()
            })
            .collect()
    }

    #[test]
    fn threshold_is_strict() {
        let zero = SaliencyMap::new(8, 4, vec![0; 32]).unwrap();
        assert!(threshold_points(&zero, 150).is_empty());
        let map = SaliencyMap::from_fn(8, 4, |x, y| match (x, y) {
            (1, 0) | (5, 2) | (7, 3) => 200,
            (3, 3) => 150,
            _ => 10,
        });
        let pts = threshold_points(&map, 150);
        let coords: Vec<(usize, usize)> = pts.iter().map(|p| (p.erp_px, p.erp_py)).collect();
        assert_eq!(coords, vec![(1, 0), (5, 2), (7, 3)]);
        assert_eq!(pts[1].position, erp_to_spherical(5, 2, 8, 4).unwrap());
    }

    #[test]
    fn tight_group_is_one_cluster() {
        let pts: Vec<SalientPoint> = (0..10).map(|i| point(0.01 * i as f64, 0.02 * i as f64, i, 0)).collect();
        let c = dbscan_spherical(&pts, 1.2, 3).unwrap();
        assert_eq!(c.clusters, vec![(0..10).collect::<Vec<_>>()]);
        assert!(c.noise.is_empty());
    }

    #[test]
    fn separated_groups_are_two_clusters() {
        let mut pts: Vec<SalientPoint> = (0..10).map(|i| point(0.0, -1.25 + 0.005 * i as f64, i, 0)).collect();
        pts.extend((0..10).map(|i| point(0.0, 1.25 + 0.005 * i as f64, 100 + i, 0)));
        let c = dbscan_spherical(&pts, 1.2, 3).unwrap();
        assert_eq!(c.clusters.len(), 2);
        assert_eq!(c.clusters[0], (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn matches_reference_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(150);
        let pts = random_sphere_points(150, &mut rng);
        let vecs: Vec<[f64; 3]> = pts.iter().map(|p| p.to_unit_vector()).collect();
        for (eps, min_pts) in [(0.2, 3), (0.35, 5), (0.1, 2)] {
            let got = dbscan_unit_vectors(&vecs, eps, min_pts).unwrap().labels(pts.len());
            assert_eq!(got, reference_dbscan(&pts, eps, min_pts), "eps={eps} min_pts={min_pts}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(dbscan_unit_vectors(&[], 0.0, 3).is_err());
        assert!(dbscan_unit_vectors(&[], 0.1, 0).is_err());
        assert!(dbscan_unit_vectors(&[], 0.1, 1).unwrap().clusters.is_empty());
    }

    proptest! {
        #[test]
        fn input_order_does_not_matter(seed in any::<u64>(), eps in 0.05f64..0.6, min_pts in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<SalientPoint> = random_sphere_points(60, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, p)| SalientPoint { position: p, erp_px: i % 13, erp_py: i / 13, intensity: 255 })
                .collect();
            let mut shuffled: Vec<usize> = (0..pts.len()).collect();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<SalientPoint> = shuffled.iter().map(|&i| pts[i]).collect();
            let a = dbscan_spherical(&pts, eps, min_pts).unwrap();
            let b = dbscan_spherical(&permuted, eps, min_pts).unwrap();
            let to_pixels = |c: &Clustering, src: &[SalientPoint]| -> Vec<Vec<(usize, usize)>> {
                c.clusters.iter().map(|m| {
                    let mut v: Vec<_> = m.iter().map(|&i| (src[i].erp_py, src[i].erp_px)).collect();
                    v.sort();
                    v
                }).collect()
            };
            let mut ca = to_pixels(&a, &pts);
            let mut cb = to_pixels(&b, &permuted);
            ca.sort();
            cb.sort();
            prop_assert_eq!(ca, cb);
        }
    }

    fn blob_map(w: usize, h: usize, blobs: &[(f64, f64, f64)]) -> SaliencyMap {
        SaliencyMap::from_fn(w, h, |x, y| {
            let p = erp_to_spherical(x, y, w, h).unwrap();
            let v = blobs
                .iter()
                .map(|&(lat, lon, sigma)| {
                    let d = great_circle_distance(&p, &SphericalPoint::new(lat, lon).unwrap());
                    255.0 * (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .fold(0.0, f64::max);
            v.round() as u8
        })
    }

    #[test]
    fn single_blob_centroid_inside_blob() {
        let map = blob_map(240, 120, &[(0.3, -0.8, 0.1)]);
        let regions = extract_regions(3, &map, &RegionParams::default()).unwrap();
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.frame_index, 3);
        let xs = r.points.iter().map(|p| p.erp_px);
        let ys = r.points.iter().map(|p| p.erp_py);
        let (x0, x1) = (xs.clone().min().unwrap() as f64, xs.max().unwrap() as f64);
        let (y0, y1) = (ys.clone().min().unwrap() as f64, ys.max().unwrap() as f64);
        assert!((x0..=x1).contains(&r.centroid_erp.0) && (y0..=y1).contains(&r.centroid_erp.1));
        assert!(great_circle_distance(&r.centroid_sph, &SphericalPoint::new(0.3, -0.8).unwrap()) < 0.02);
        assert!(r.points.iter().all(|p| p.intensity > 150));
        assert!((vec3::norm(r.centroid_sph.to_unit_vector()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_blobs_are_two_regions() {
        let map = blob_map(240, 120, &[(0.2, -1.0, 0.1), (-0.2, -1.0 + PI, 0.1)]);
        assert_eq!(extract_regions(0, &map, &RegionParams::default()).unwrap().len(), 2);
        let empty = SaliencyMap::new(240, 120, vec![0; 240 * 120]).unwrap();
        assert!(extract_regions(0, &empty, &RegionParams::default()).unwrap().is_empty());
    }

    #[test]
    fn blob_across_the_seam_is_one_region() {
        let map = blob_map(240, 120, &[(0.0, PI - 0.01, 0.1)]);
        let params = RegionParams { t2: 0.05, ..Default::default() };
        let regions = extract_regions(0, &map, &params).unwrap();
        assert_eq!(regions.len(), 1);
        let xs: Vec<usize> = regions[0].points.iter().map(|p| p.erp_px).collect();
        assert!(xs.iter().any(|&x| x < 10) && xs.iter().any(|&x| x > 230));
        assert!(great_circle_distance(&regions[0].centroid_sph, &SphericalPoint::new(0.0, PI - 0.01).unwrap()) < 0.02);
    }

    #[test]
    fn downscaled_extraction_reports_full_resolution_centroid() {
        let map = blob_map(240, 120, &[(0.1, 0.5, 0.1)]);
        let full = extract_regions(0, &map, &RegionParams::default()).unwrap();
        let coarse = extract_regions(0, &map, &RegionParams { downscale: 2, ..Default::default() }).unwrap();
        assert_eq!(coarse.len(), 1);
        assert!((full[0].centroid_erp.0 - coarse[0].centroid_erp.0).abs() < 2.0);
        assert!((full[0].centroid_erp.1 - coarse[0].centroid_erp.1).abs() < 2.0);
    }
}
