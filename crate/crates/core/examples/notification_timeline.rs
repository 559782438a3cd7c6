//! Walks a scheme through pre-notification, peer review, notification and
//! publication, and shows which dates the timing guards refuse.

use trustfed::calendar::SimDate;
use trustfed::registry::{advance_notification, is_recognition_mandatory, NotificationRecord, NotificationStep};

fn main() {
    let pre = SimDate::ymd(2018, 1, 31);
    let mut rec = advance_notification(&NotificationRecord::new(), NotificationStep::PreNotify, pre).unwrap();
    println!("pre-notified on {pre}");

    // Peer review is due within three months; the deadline clamps to April 30.
    let late = SimDate::ymd(2018, 5, 1);
    println!("review on {late}: {}", advance_notification(&rec, NotificationStep::PeerReview, late).unwrap_err());
    rec = advance_notification(&rec, NotificationStep::PeerReview, SimDate::ymd(2018, 4, 30)).unwrap();

    let early = SimDate::ymd(2018, 7, 30);
    println!("notify on {early}: {}", advance_notification(&rec, NotificationStep::Notify, early).unwrap_err());
    rec = advance_notification(&rec, NotificationStep::Notify, SimDate::ymd(2018, 7, 31)).unwrap();
    rec = advance_notification(&rec, NotificationStep::Publish, SimDate::ymd(2018, 9, 30)).unwrap();

    let from = rec.recognition_mandatory_from().unwrap();
    println!("published {}, recognition mandatory from {from}", rec.published_on.unwrap());
    for at in [from.add_days(-1), from, from.add_days(1)] {
        println!("  {at}: {}", is_recognition_mandatory(&rec, at));
    }
}
