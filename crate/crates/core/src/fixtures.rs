//! Bundled example texts: sample portal messages, a small ICD-9 database and
//! a demonstration grounding pack. The offline mock provider assembles its
//! outputs from the message fragments here.

use crate::corpus::{Exemplar, GroundingPack};
use crate::icd9::{parse_icd9_str, Icd9Code};

/// A public medical Q&A forum post, for contrast with portal messages.
pub const QA_FORUM_POST: &str = "I am a 35 year old male and own a landscape business for 2 years, for the last 6 weeks It has become difficult for me to get through half the day without becoming exhausted (low energy that comes on fairly sudden, slightly shakey, foggy mind kinda like im in a dream) I have cut my hours back and have had employees make up the difference, thinking maby I am working to hard, energy still cuts out half way thru the day. I have had some life changes (seperation, moving to new house, extra debt to support expanding business) but nothing I would consider unmanageable. Any advice? I have setup a health exam with my doctor in September? Could this be physical or phsychological? Any advice from past experiencees? Thanks!";

pub const PORTAL_MESSAGE: &str = "Hey Dr. James,\n\nThe pain is back again. I don't know what the next steps should be but the pain medication you gave me is NOT working. Is there something else I can try that you can call in or should I just schedule an apt?\n\nBest,\nDana";

pub const DIABETIC_COMA_PROMPT: &str =
    "Patient is experiencing a diabetic coma and is unsure of what steps to take to regain control.";

/// Outputs for [`DIABETIC_COMA_PROMPT`] from three generation strategies:
/// zero-shot (two models) and grounded.
pub const ZEROSHOT_OUTPUT_A: &str = "Hey Doc, I'm in a bit of a tough spot right now. I'm experiencing a diabetic coma and I'm not sure how to regain control. I am dizzy, disoriented, and my blood sugar levels are all over. Can you give me some guidance on how to get back on track?";

pub const ZEROSHOT_OUTPUT_B: &str = "Hi Dr. I hope you are doing well,\n\nI am very worried as I think I'm experiencing a diabetic coma. I have been feeling extremely dizzy and confused. I am also having difficulty staying conscious.\n\nI'm not sure what to do and I am very scared. My blood sugar levels, which I have been monitoring, have been extremely high. My insulin does not seem to be helping.\n\nWhat should I do? Should I go to the hospital or wait this out? I dont want to overreact, but I also don't know if I should ignore my symptoms.\n\nThank you";

pub const GROUNDED_OUTPUT: &str = "Hi Dr,\n\nI am really scared. I just woke up, on the ground, and have no idea how I got there. I think I may have been in a diabetic coma. I am very nauseous and don't know what to do. I am worried I might slip into one again. Do I need to go to a hospital? My blood sugar has been very difficult to control.\n\nThanks,";

pub(crate) const GREETINGS: &[&str] = &[
    "Hi Dr,",
    "Hey Dr. James,",
    "Hi Dr. I hope you are doing well,",
    "Hey Doc,",
    "Hello,",
    "Good morning Dr. Patel,",
    "Hi there,",
    "Dr. Lee,",
];

pub(crate) const OPENERS: &[&str] = &[
    "The pain is back again.",
    "I'm in a bit of a tough spot right now.",
    "I am really scared.",
    "Sorry to bother you again.",
    "Quick question for you.",
    "Following up from my visit last week.",
    "Hope you had a good weekend.",
    "I wasn't sure if I should call or send a message.",
];

pub(crate) const BODY_SENTENCES: &[&str] = &[
    "I don't know what the next steps should be but the pain medication you gave me is NOT working.",
    "Is there something else I can try that you can call in or should I just schedule an apt?",
    "I am very nauseous and don't know what to do.",
    "Do I need to go to a hospital?",
    "I have been feeling extremely dizzy and confused.",
    "My insulin does not seem to be helping.",
    "What should I do?",
    "I dont want to overreact, but I also don't know if I should ignore my symptoms.",
    "Can you give me some guidance on how to get back on track?",
    "My blood sugar has been very difficult to control.",
    "I am worried it might happen again.",
    "It has been getting worse at night.",
    "The pharmacy said they never got the refill.",
    "I tried the stretches you showed me but they haven't helped much.",
    "My husband thinks I should come in but I wanted to check with you first.",
    "I have been taking it with food like you said.",
    "Should I keep taking the same dose?",
    "I can come in Thursday afternoon if you have an opening.",
    "It started after I got back from my trip.",
    "I haven't been sleeping well because of it.",
    "I also noticed some swelling in my ankles.",
    "Is this something the nurse could look at?",
    "Let me know if you need me to get labs drawn first.",
    "I know we talked about this at my last appointment.",
];

pub(crate) const CLOSINGS: &[&str] = &[
    "Thanks,",
    "Best,\nDana",
    "Thank you",
    "Thanks!",
    "Thank you so much,\nMaria",
    "Appreciate it,\nTom",
];

pub(crate) const PROMPT_SITUATIONS: &[&str] = &[
    "Patient was recently told they have {} and is asking whether their current medication needs to change.",
    "Patient has questions about {} after reading their latest test results in the portal.",
    "Patient has a history of {} and is experiencing new symptoms and wants to know if they should come in.",
    "Patient is worried that their {} is getting worse and asks about next steps.",
    "Patient needs a refill related to their {} and asks if they need an appointment first.",
    "Patient noticed side effects from treatment for {} and wants advice.",
    "Patient is following up about {} after a recent emergency room visit.",
    "Patient is asking whether {} could explain the fatigue they have had for two weeks.",
];

pub(crate) const PROMPT_DETAILS: &[&str] = &[
    "",
    " They mention it is affecting their sleep.",
    " They are traveling next week.",
    " Their spouse is concerned.",
    " They have been missing work because of it.",
    " They ask if a telehealth visit would be enough.",
];

/// A small ICD-9 database touching every standard chapter.
pub const SAMPLE_ICD9_DB: &str = include_str!("../fixtures/icd9_sample.tsv");

/// Ten hand-written (prompt, message) pairs in portal-message style. These
/// are illustrative stand-ins, not de-identified real messages.
pub const DEMO_PACK_JSONL: &str = include_str!("../fixtures/demo_pack.jsonl");

pub fn sample_icd9_codes() -> Vec<Icd9Code> {
    parse_icd9_str(SAMPLE_ICD9_DB).expect("bundled database parses")
}

pub fn demo_grounding_pack() -> GroundingPack {
    #[derive(serde::Deserialize)]
    struct Line {
        prompt: String,
        message: String,
    }
    GroundingPack::new(
        DEMO_PACK_JSONL
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let line: Line = serde_json::from_str(l).expect("bundled pack parses");
                Exemplar::new(line.prompt, line.message)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_grounding_pack;
    use crate::icd9::ChapterTable;
    use crate::stage2::DEFAULT_SENTINEL;

    #[test]
    fn demo_pack_is_valid() {
        let pack = demo_grounding_pack();
        assert!(validate_grounding_pack(&pack, 10, DEFAULT_SENTINEL).is_valid());
    }

    #[test]
    fn sample_db_covers_every_chapter() {
        let table = ChapterTable::standard();
        let codes = sample_icd9_codes();
        for ch in table.chapters() {
            assert!(
                codes
                    .iter()
                    .any(|c| table.chapter_of(c).ok().map(|x| x.id) == Some(ch.id)),
                "chapter {} has no codes",
                ch.id
            );
        }
    }
}
