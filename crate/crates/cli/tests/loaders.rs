use std::fs;
use std::path::PathBuf;

use censored_gp_cli::{load_demand_csv, load_weather_csv, LoadError};
use tempfile::TempDir;

fn file(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn three_rows_load() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,demand,available\n2020-01-01,10,1\n2020-01-02,12.5,0\n2020-01-04,9,1\n");
    let d = load_demand_csv(&p).unwrap();
    assert_eq!(d.n(), 3);
    assert_eq!(d.time_index(), vec![0.0, 1.0, 3.0]);
    let ds = d.to_dataset(false).unwrap();
    assert_eq!(ds.n(), 3);
    assert_eq!(ds.dim(), 1);
    assert_eq!(ds.censored(), &[false, true, false]);
    assert_eq!(ds.observed(), &[10.0, 12.5, 9.0]);
}

#[test]
fn missing_demand_column_is_named() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,available\n2020-01-01,1\n");
    let err = load_demand_csv(&p).unwrap_err();
    assert!(matches!(&err, LoadError::MissingColumn { column, .. } if column == "demand"));
    assert!(err.to_string().contains("`demand`"));
}

#[test]
fn zero_availability_everywhere_labels_every_row() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,demand,available\n2020-01-01,1,0\n2020-01-02,2,0\n");
    assert_eq!(load_demand_csv(&p).unwrap().labels(), vec![true, true]);
    let p = file(&dir, "e.csv", "date,demand,available\n2020-01-01,1,1\n2020-01-02,2,1\n");
    assert_eq!(load_demand_csv(&p).unwrap().labels(), vec![false, false]);
}

#[test]
fn non_numeric_cell_rejected() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,demand,available\n2020-01-01,10,1\n2020-01-02,lots,1\n");
    match load_demand_csv(&p).unwrap_err() {
        LoadError::BadCell { line, column, value, .. } => {
            assert_eq!((line, column.as_str(), value.as_str()), (3, "demand", "lots"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn non_monotone_timestamps_rejected() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,demand,available\n2020-01-02,1,1\n2020-01-01,2,1\n");
    assert!(matches!(load_demand_csv(&p), Err(LoadError::NonMonotone { line: 3, .. })));
    let p = file(&dir, "e.csv", "date,demand,available\n2020-01-02,1,1\n2020-01-02,2,1\n");
    assert!(matches!(load_demand_csv(&p), Err(LoadError::NonMonotone { .. })));
}

#[test]
fn negative_demand_rejected() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "d.csv", "date,demand,available\n2020-01-01,-1,1\n");
    assert!(matches!(load_demand_csv(&p), Err(LoadError::BadValue { .. })));
}

#[test]
fn optional_columns_and_timestamps() {
    let dir = TempDir::new().unwrap();
    let p = file(
        &dir,
        "d.csv",
        "date,demand,available,dropoffs,latent\n\
         2020-03-02T00:00:00,5,1,4,5\n\
         2020-03-02T00:15:00,6,0,7,8\n\
         2020-03-02T00:30:00,7,1,2,7\n",
    );
    let d = load_demand_csv(&p).unwrap();
    assert_eq!(d.dropoffs.as_deref(), Some(&[4.0, 7.0, 2.0][..]));
    // each row sees the previous interval's dropoffs
    assert_eq!(d.dropoff_series().unwrap().unwrap().values(), &[4.0, 4.0, 7.0]);
    assert!((d.median_spacing() - 1.0 / 96.0).abs() < 1e-12);
    let (x, layout) = d.features(true);
    assert_eq!(layout.calendar, Some([1, 2]));
    assert_eq!(x[(1, 1)], 0.25);
    assert_eq!(x[(0, 2)], 0.0); // a Monday
    let ds = d.to_dataset(false).unwrap();
    assert_eq!(ds.scoring_targets(), &[5.0, 8.0, 7.0]);
}

fn demand(dir: &TempDir) -> PathBuf {
    file(
        dir,
        "d.csv",
        "date,demand,available\n2020-01-01,10,1\n2020-01-02,11,1\n2020-01-03,12,0\n2020-01-04,13,1\n",
    )
}

#[test]
fn full_weather_coverage_adds_columns() {
    let dir = TempDir::new().unwrap();
    let w = file(
        &dir,
        "w.csv",
        "date,temp,rain\n2020-01-04,3,0\n2020-01-01,1,1\n2020-01-02,2,0\n2020-01-03,4,2\n",
    );
    let table = load_weather_csv(&w).unwrap();
    assert_eq!(table.names, vec!["temp", "rain"]);
    let d = load_demand_csv(demand(&dir)).unwrap();
    let (joined, report) = d.join_weather(&table).unwrap();
    assert_eq!((report.kept, report.dropped), (4, 0));
    let (x, layout) = joined.features(false);
    assert_eq!(x.ncols(), 3);
    assert_eq!(layout.weather, vec![1, 2]);
    let temp: Vec<f64> = x.column(1).iter().copied().collect();
    let mean = temp.iter().sum::<f64>() / 4.0;
    let var = temp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    // joined by date, not by row position
    assert!(temp[0] < temp[1] && temp[1] < temp[3] && temp[3] < temp[2]);
}

#[test]
fn partial_overlap_keeps_intersection() {
    let dir = TempDir::new().unwrap();
    let w = file(&dir, "w.csv", "date,temp\n2020-01-02,1\n2020-01-03,2\n2020-01-09,3\n");
    let d = load_demand_csv(demand(&dir)).unwrap();
    let (joined, report) = d.join_weather(&load_weather_csv(&w).unwrap()).unwrap();
    assert_eq!((report.kept, report.dropped), (2, 2));
    assert_eq!(joined.demand, vec![11.0, 12.0]);
    assert_eq!(joined.available, vec![true, false]);
}

#[test]
fn duplicate_weather_date_named() {
    let dir = TempDir::new().unwrap();
    let w = file(&dir, "w.csv", "date,temp\n2020-01-02,1\n2020-01-03,2\n2020-01-02,3\n2020-01-03,3\n");
    match load_weather_csv(&w).unwrap_err() {
        LoadError::DuplicateDate { date, .. } => assert_eq!(date, "2020-01-02"),
        other => panic!("{other}"),
    }
}

#[test]
fn disjoint_weather_rejected() {
    let dir = TempDir::new().unwrap();
    let w = file(&dir, "w.csv", "date,temp\n2021-01-02,1\n");
    let d = load_demand_csv(demand(&dir)).unwrap();
    assert!(matches!(d.join_weather(&load_weather_csv(&w).unwrap()), Err(LoadError::NoOverlap)));
}
