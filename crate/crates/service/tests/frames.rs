//! Client frame parsing and event serialization round trips.

use biotone_core::state::ClockTime;
use biotone_service::{ClientFrame, Payload, SessionEvent};
use proptest::prelude::*;

fn frame() -> impl Strategy<Value = ClientFrame> {
    prop_oneof![
        (1.0f64..250.0, 1.0f64..60.0).prop_map(|(hr_bpm, rr_rpm)| ClientFrame::VitalsOverride { hr_bpm, rr_rpm }),
        (proptest::option::of(0u32..1440), proptest::option::of(-20.0f64..45.0), proptest::option::of("[a-z]{1,10}")).prop_map(
            |(m, temp_c, status)| ClientFrame::Context {
                time: m.map(ClockTime::from_minutes),
                temp_c,
                status,
            }
        ),
        Just(ClientFrame::Pause),
        Just(ClientFrame::Resume),
    ]
}

proptest! {
    #[test]
    fn wire_frames_parse_back(f in frame()) {
        let wire = f.to_wire();
        prop_assert_eq!(&wire["v"], 1);
        prop_assert_eq!(ClientFrame::parse(&wire.to_string()).unwrap(), f.clone());
        let mut bare = wire.clone();
        bare.as_object_mut().unwrap().remove("v");
        prop_assert_eq!(ClientFrame::parse(&bare.to_string()).unwrap(), f.clone());
    }

    #[test]
    fn events_round_trip_as_json_lines(f in frame(), t in 0.0f64..1e5) {
        let e = SessionEvent::new(t, Payload::Input { frame: f });
        let line = e.to_json_line();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(serde_json::from_str::<SessionEvent>(&line).unwrap(), e);
    }
}

#[test]
fn rejects_unknown_types_fields_and_versions() {
    for bad in [
        r#"{"type":"warp"}"#,
        r#"{"type":"pause","extra":1}"#,
        r#"{"v":2,"type":"pause"}"#,
        r#"{"type":"vitals_override","hr_bpm":"fast","rr_rpm":12}"#,
        r#"{"type":"context","time":"25:00"}"#,
        r#"[1,2]"#,
    ] {
        assert!(ClientFrame::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn documented_example_frames_parse() {
    assert_eq!(
        ClientFrame::parse(r#"{"type":"vitals_override","hr_bpm":95,"rr_rpm":22}"#).unwrap(),
        ClientFrame::VitalsOverride { hr_bpm: 95.0, rr_rpm: 22.0 }
    );
    assert!(matches!(
        ClientFrame::parse(r#"{"type":"context","time":"23:10","temp_c":24,"status":"resting"}"#).unwrap(),
        ClientFrame::Context { time: Some(t), temp_c: Some(24.0), .. } if t.to_string() == "23:10"
    ));
}
