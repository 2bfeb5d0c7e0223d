//! Deterministic synthetic threads with a planted commitment, a planted
//! helpful sentence and an out-of-vocabulary entity in the reference.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, EmailMessage, EmailThread, TodoInstance};
use crate::text::{content_lemmas, lemmatize, tokenize};

pub const TASK_VERBS: &[&str] = &[
    "send", "review", "update", "check", "prepare", "share", "fix", "finish", "submit", "revise",
    "forward", "print", "sign", "test", "translate", "approve", "archive", "proofread", "format",
    "summarize",
];

pub const TASK_MODIFIERS: &[&str] = &[
    "quarterly", "annual", "monthly", "final", "internal", "legal", "budget", "vendor", "audit",
    "payroll", "client", "travel", "security", "onboarding", "pricing", "board", "research",
    "compliance", "partner", "regional",
];

pub const TASK_OBJECTS: &[&str] = &[
    "report", "proposal", "contract", "invoice", "agenda", "summary", "plan", "forecast", "memo",
    "checklist", "roadmap", "spreadsheet", "estimate", "timeline", "policy", "deck", "brief",
    "questionnaire", "manual", "ledger",
];

pub const WEEKDAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

/// Filler sentences. None of their content lemmas occurs in the task
/// inventories, and several use "will" so that a commitment detector cannot
/// rely on that word alone.
pub const DISTRACTOR_SENTENCES: &[&str] = &[
    "The weather has been lovely this spring.",
    "My cat knocked a glass off the table again.",
    "The parking garage will be closed for cleaning.",
    "Lunch will be served in the kitchen at noon.",
    "Hope your vacation was relaxing.",
    "The coffee machine on the third floor is broken again.",
    "Traffic was terrible this morning.",
    "Our team picnic was a big success.",
    "The elevator will be out of service for an hour.",
    "I just got back from the dentist.",
    "The new chairs in the lobby look great.",
    "Someone left an umbrella in the conference room.",
    "It will probably rain all afternoon.",
    "The fire alarm drill went smoothly.",
    "Congratulations on the new baby!",
    "The copier jammed twice today.",
    "My flight landed late last night.",
    "The garden outside the office looks beautiful.",
    "Parking permits will be renewed automatically.",
    "There is cake in the break room.",
    "The wifi seems slow on this floor.",
    "My kids loved the museum.",
    "The holiday party will be at the hotel downtown.",
    "I hope you had a restful weekend.",
    "The windows in the north wing were cleaned.",
    "The front desk will hand out new badges.",
    "Our neighbor adopted a puppy.",
    "The marathon route passes near the building.",
    "The heating will be switched on next month.",
    "I finally watched that movie you mentioned.",
    "The bakery across the street opened early.",
    "Somebody parked in the loading zone.",
    "The plants near the entrance need water.",
    "The gym downstairs will stay open late.",
    "Our old mascot costume turned up in storage.",
    "The city is repaving the avenue.",
    "I love the photos from the retreat.",
    "The recycling bins were moved upstairs.",
    "My brother is visiting from abroad.",
    "The lights in the hallway keep flickering.",
    "The snack cabinet will be restocked soon.",
    "Everyone enjoyed the karaoke night.",
    "The street fair drew a huge crowd.",
    "The river path is lovely at sunset.",
    "You will love the new espresso blend.",
];

const GREETINGS: &[&str] = &["Hello!", "Hi there!", "Good morning!", "Hey!"];
const SIGN_OFFS: &[&str] = &["Best regards, {sender}.", "Thanks, {sender}.", "Cheers, {sender}."];
const SENDERS: &[&str] = &["Alex", "Jordan", "Casey", "Morgan", "Riley", "Taylor", "Jamie", "Robin", "Dana", "Quinn"];
const SURNAMES: &[&str] = &["Baker", "Chen", "Okafor", "Novak", "Silva", "Haddad", "Larsen", "Ito"];
const GENERIC_SUBJECTS: &[&str] = &["Quick question", "Following up", "Checking in", "Next steps", "Hello again"];
const ASKS: &[&str] = &[
    "Could you take care of this when you get a chance?",
    "Let me know if you can help.",
    "Can you handle this one?",
    "Would you mind looking into it?",
];
const PREVIOUS_SIGN_OFFS: &[&str] = &["Thanks!", "Much appreciated.", "Talk soon."];

const COMMITMENTS: &[&str] = &[
    "I will {verb} it by {day}.",
    "I will {verb} it for you by {day}.",
    "I'll {verb} it before {day}.",
    "Sure, I will {verb} that by {day}.",
    "I will {verb} it for {entity} by {day}.",
    "I'll {verb} this for {entity} on {day}.",
];

const HELPFUL: &[&str] = &[
    "Thanks for asking me to {verb} the {mod} {obj} by {day}.",
    "You wanted someone to {verb} the {mod} {obj} before {day}.",
    "The {mod} {obj} needs someone to {verb} it by {day}.",
    "Your note said to {verb} the {mod} {obj} on {day}.",
];

/// Verbs whose reference uses "to" rather than "for" before the entity.
const TO_VERBS: &[&str] = &["send", "forward", "share", "submit"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_instances: usize,
    /// Upper bound on the combined size of the verb, modifier and object
    /// inventories actually used.
    pub vocab_size: usize,
    pub entity_pool: Vec<String>,
    pub seed: u64,
}

impl SynthSpec {
    /// A spec with a generated entity pool of `max(4n, 64)` names.
    pub fn new(n_instances: usize, seed: u64) -> Self {
        Self {
            n_instances,
            vocab_size: TASK_VERBS.len() + TASK_MODIFIERS.len() + TASK_OBJECTS.len(),
            entity_pool: generate_entity_pool((4 * n_instances).max(64), seed ^ 0x5eed_e17e),
            seed,
        }
    }
}

fn reserved_lemmas() -> HashSet<String> {
    let mut words: Vec<&str> = Vec::new();
    words.extend(TASK_VERBS);
    words.extend(TASK_MODIFIERS);
    words.extend(TASK_OBJECTS);
    words.extend(WEEKDAYS);
    words.extend(SENDERS);
    words.extend(SURNAMES);
    let mut out: HashSet<String> = words.iter().flat_map(|w| tokenize(w)).map(|t| lemmatize(&t)).collect();
    for text in DISTRACTOR_SENTENCES
        .iter()
        .chain(GREETINGS)
        .chain(SIGN_OFFS)
        .chain(GENERIC_SUBJECTS)
        .chain(ASKS)
        .chain(PREVIOUS_SIGN_OFFS)
        .chain(COMMITMENTS)
        .chain(HELPFUL)
    {
        out.extend(tokenize(text).iter().map(|t| lemmatize(t)));
    }
    out
}

/// `n` distinct lowercase pseudo-words. Each is its own lemma, is not a
/// stopword, does not end in `s`, and collides with no generator word.
pub fn generate_entity_pool(n: usize, seed: u64) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br", "kr", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    const CODAS: &[&str] = &["", "", "n", "r", "l", "k", "x"];
    let reserved = reserved_lemmas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(&mut rng).unwrap());
            w.push_str(VOWELS.choose(&mut rng).unwrap());
        }
        w.push_str(CODAS.choose(&mut rng).unwrap());
        let ok = !w.ends_with('s')
            && lemmatize(&w) == w
            && content_lemmas(&[w.clone()]) == [w.clone()]
            && !reserved.contains(&w);
        if ok && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn fill(template: &str, verb: &str, modifier: &str, obj: &str, entity: &str, day: &str, sender: &str) -> String {
    template
        .replace("{verb}", verb)
        .replace("{mod}", modifier)
        .replace("{obj}", obj)
        .replace("{entity}", entity)
        .replace("{day}", day)
        .replace("{sender}", sender)
}

fn inventory(list: &'static [&'static str], n: usize) -> &'static [&'static str] {
    &list[..n.clamp(2, list.len())]
}

fn pick<'a>(rng: &mut ChaCha8Rng, list: &[&'a str]) -> &'a str {
    list.choose(rng).copied().unwrap()
}

/// Generates `spec.n_instances` instances.
///
/// Each candidate email holds a greeting, one to four distractors, the
/// helpful sentence, the commitment and a sign-off. About half the
/// instances also carry a previous email made of a greeting, distractors, a
/// generic request and a sign-off. The recipient is an entity from the pool
/// (drawn without replacement while the pool lasts), and the shortest
/// annotation is `"<Verb> the <mod> <obj> to|for <Entity> by <Day>."`.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Vec<TodoInstance>, CorpusError> {
    if spec.entity_pool.is_empty() {
        return Err(CorpusError::EmptyEntityPool);
    }
    if spec.n_instances == 0 {
        return Err(CorpusError::Synth("n_instances must be at least 1".into()));
    }
    if let Some(bad) = spec.entity_pool.iter().find(|e| tokenize(e).len() != 1) {
        return Err(CorpusError::Synth(format!("entity {bad:?} is not a single token")));
    }
    let share = spec.vocab_size / 3;
    let verbs = inventory(TASK_VERBS, share);
    let mods = inventory(TASK_MODIFIERS, share);
    let objs = inventory(TASK_OBJECTS, spec.vocab_size.saturating_sub(2 * share));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<&String> = spec.entity_pool.iter().collect();
    pool.shuffle(&mut rng);

    let mut out = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let entity = capitalize(pool[i % pool.len()]);
        let verb = pick(&mut rng, verbs);
        let modifier = pick(&mut rng, mods);
        let obj = pick(&mut rng, objs);
        let day = pick(&mut rng, WEEKDAYS);
        let sender = pick(&mut rng, SENDERS);
        let f = |t: &str| fill(t, verb, modifier, obj, &entity, day, sender);

        let mut distractors: Vec<&str> = DISTRACTOR_SENTENCES.to_vec();
        distractors.shuffle(&mut rng);
        let mut distractors = distractors.into_iter();

        let helpful = f(pick(&mut rng, HELPFUL));
        let commitment = f(pick(&mut rng, COMMITMENTS));
        let mut middle: Vec<String> = (0..rng.gen_range(1..=4))
            .map(|_| distractors.next().unwrap().to_string())
            .collect();
        middle.push(helpful.clone());
        middle.shuffle(&mut rng);
        let commit_pos = rng.gen_range(0..=middle.len());
        middle.insert(commit_pos, commitment);

        let mut sentences = vec![pick(&mut rng, GREETINGS).to_string()];
        sentences.extend(middle);
        sentences.push(f(pick(&mut rng, SIGN_OFFS)));
        let commitment_index = 1 + commit_pos;
        let helpful_index = sentences.iter().position(|s| *s == helpful).unwrap();

        let subject = if rng.gen_bool(0.5) {
            format!("{} {obj}", capitalize(modifier))
        } else {
            pick(&mut rng, GENERIC_SUBJECTS).to_string()
        };
        let display = if rng.gen_bool(0.5) {
            format!("{entity} {}", pick(&mut rng, SURNAMES))
        } else {
            entity.clone()
        };

        let id = format!("synth-{i:06}");
        let sent_time = 1_600_000_000 + (i as i64) * 7_200;
        let previous = if rng.gen_bool(0.5) {
            let mut p = vec![pick(&mut rng, GREETINGS).to_string()];
            for _ in 0..rng.gen_range(1..=2) {
                p.push(distractors.next().unwrap().to_string());
            }
            p.push(pick(&mut rng, ASKS).to_string());
            p.push(pick(&mut rng, PREVIOUS_SIGN_OFFS).to_string());
            Some(EmailMessage {
                id: format!("{id}/prev"),
                from: display.clone(),
                to: vec![sender.to_string()],
                subject: subject.clone(),
                body: p.join(" "),
                sent_time: sent_time - rng.gen_range(600..86_400),
                reply_to_id: None,
            })
        } else {
            None
        };

        let mut helpful_labels = vec![false; sentences.len() + previous.as_ref().map_or(0, |p| p.sentences().len())];
        helpful_labels[helpful_index] = true;

        let prep = if TO_VERBS.contains(&verb) { "to" } else { "for" };
        let short = format!("{} the {modifier} {obj} {prep} {entity} by {day}.", capitalize(verb));
        let long = format!("Remember to {verb} the {modifier} {obj} and get it {prep} {entity} by {day}.");
        let annotations = if rng.gen_bool(0.5) { vec![short, long] } else { vec![long, short] };

        out.push(TodoInstance {
            id: id.clone(),
            thread: EmailThread {
                candidate: EmailMessage {
                    id,
                    from: sender.to_string(),
                    to: vec![display],
                    subject: if previous.is_some() { format!("Re: {subject}") } else { subject },
                    body: sentences.join(" "),
                    sent_time,
                    reply_to_id: previous.as_ref().map(|p| p.id.clone()),
                },
                previous,
            },
            commitment_sentence_index: commitment_index,
            annotations,
            helpful_labels: Some(helpful_labels),
        });
    }
    Ok(out)
}
