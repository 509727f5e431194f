//! Temporary timing probe.

use heegner_core::orders::{PicFamily, QuadSetting};
use heegner_core::quat::EichlerContext;
use std::rc::Rc;
use std::time::Instant;

fn main() {
    let fam = PicFamily::new(-7, 11, None);
    let setting = QuadSetting::new(-7, 11, 2).unwrap();
    let ms: Vec<u64> = (1..=20).collect();
    for s in [1u32, 2] {
        let pic = fam.group_s(s);
        for ell in [3u64, 7] {
            let t = Instant::now();
            let ctx = EichlerContext::new(setting, Rc::clone(&pic), 0, ell).unwrap();
            let t_ctx = t.elapsed();
            let t = Instant::now();
            let direct = ctx.delta_total_range(&ms).unwrap();
            let t_dir = t.elapsed();
            let t = Instant::now();
            let pairs = ctx.ideal_pair_count_range(&ms).unwrap();
            let t_pair = t.elapsed();
            let t = Instant::now();
            for &m in &ms {
                let _ = ctx.delta_closed(m).unwrap();
            }
            let t_closed = t.elapsed();
            assert_eq!(direct, pairs);
            println!(
                "s={s} ell={ell}: ctx {t_ctx:?} direct {t_dir:?} pairs {t_pair:?} closed {t_closed:?}"
            );
        }
    }
}
