use rosepoint_preprocess::{read_block_archive, write_block_archive, BlockSpec, PreprocessError, SampledBlock};

#[test]
fn rejects_garbage_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.bin");
    std::fs::write(&path, b"nope").unwrap();
    assert!(matches!(read_block_archive(&path), Err(PreprocessError::Archive(_))));

    let spec = BlockSpec { n_points: 2, ..Default::default() };
    let block = SampledBlock {
        positions: vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        source_indices: vec![7, 9],
        labels: None,
        block_origin: [0.0; 3],
        edge: 10.0,
        offset: 0.0,
    };
    write_block_archive(&path, &spec, std::slice::from_ref(&block)).unwrap();
    let (_, restored) = read_block_archive(&path).unwrap();
    assert_eq!(restored, vec![block]);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_block_archive(&path), Err(PreprocessError::Archive(_))));
    assert!(matches!(read_block_archive(dir.path().join("missing.bin")), Err(PreprocessError::Io { .. })));
}
