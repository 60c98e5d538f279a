use medaxis_web::Scene;

#[test]
fn fixture_scene_round_trips_through_json() {
    let scene = Scene::from_fixture("cylinder", 0.0, 3).unwrap();
    let s = scene.summary();
    assert!(s.axis_nodes > 0 && s.branches > 0);
    assert_eq!(scene.axis_links().len(), 6 * (s.axis_nodes - scene.bundle().axis.roots.len()));
    assert_eq!(scene.axis_link_nodes().len() * 6, scene.axis_links().len());

    let loaded = Scene::from_json(&scene.bundle().to_json()).unwrap();
    assert_eq!(loaded.summary(), s);
    assert_eq!(loaded.axis_links(), scene.axis_links());
}

#[test]
fn obstructing_the_root_takes_everything() {
    let scene = Scene::from_fixture("cylinder", 0.0, 0).unwrap();
    let b = scene.bundle();
    let root = b.axis.roots[0];
    let all = scene.obstruct(root).unwrap();
    assert_eq!(all.downstream.len(), b.axis.ids.len());
    assert!((all.artery_fraction - 1.0).abs() < 1e-9);
    assert!((all.territory_fraction.unwrap() - 1.0).abs() < 1e-9);

    let leaf = *b.axis.ids.iter().find(|&&n| !b.axis.parents.contains(&Some(n))).unwrap();
    let one = scene.obstruct(leaf).unwrap();
    assert_eq!(one.downstream, vec![leaf]);
    assert!(one.territory_volume.unwrap() <= all.territory_volume.unwrap());
}

#[test]
fn nearest_node_and_unknown_ids() {
    let scene = Scene::from_fixture("cylinder", 0.0, 0).unwrap();
    let b = scene.bundle();
    let p = b.axis.positions.decode().unwrap();
    assert_eq!(scene.nearest_node([p[0], p[1], p[2]]), Some(b.axis.ids[0]));
    assert!(scene.obstruct(usize::MAX).is_err());
    assert!(Scene::from_json("{}").is_err());
}
