macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $module() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(gradient_check, "gradient_check.rs");
example!(synthetic_data, "synthetic_data.rs");
example!(encoder_attention, "encoder_attention.rs");
example!(pretrain_hybrid, "pretrain_hybrid.rs");
example!(transfer_low_label, "transfer_low_label.rs");
example!(checkpoint_round_trip, "checkpoint_round_trip.rs");
