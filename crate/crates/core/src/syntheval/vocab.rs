//! Built-in text libraries for the synthetic generator.
//!
//! Mode vocabularies are pairwise disjoint after folding and stopword removal,
//! so every planted log shares distinctive words only with its own mode.

/// `{n}` is replaced by a small random number.
pub const MODE_LIBRARY: &[(&str, &[&str])] = &[
    (
        "Q8_BREAKER",
        &[
            "Disparo do disjuntor Q8, rearmado localmente",
            "Q8 breaker tripped on ramp, reset by technician",
            "Disjuntor Q8 sem fecho, bobine de fecho testada",
            "Breaker Q8 trip counter at {n}, tripping coil renewed",
        ],
    ),
    (
        "MAIN_SWITCH_FM300",
        &[
            "Interruptor geral FM300 encravado, manobra impossivel",
            "Main switch FM300 auxiliary contacts burnt",
            "FM300 contactos auxiliares queimados, interruptor geral reparado",
            "Main switch FM300 refuses to close, operating mechanism lubricated",
        ],
    ),
    (
        "MAIN_INVERTER_CLASS",
        &[
            "Alarme de classe ativo, codigo {n}",
            "Class alarm {n} latched, software reloaded",
            "Classe de aviso persistente, parametrizacao revista",
            "Class warning persists following firmware update",
        ],
    ),
    (
        "THERMAL_COOLING",
        &[
            "Sobretemperatura no conversor, ventilador do armario avariado",
            "Coolant pump pressure low, glycol loop topped",
            "Temperatura elevada nos modulos, permutador de calor limpo",
            "Cabinet fan failure caused overheating shutdown at {n} C",
        ],
    ),
    (
        "INVERTER_HW_OVERCURRENT",
        &[
            "Sobrecorrente de hardware no inversor lado maquina",
            "Inverter HW overcurrent event, peaks recorded on phase {n}",
            "Sobrecorrente HW no inversor, picos registados",
            "Hardware overcurrent in inverter phase {n}, gate driver checked",
        ],
    ),
    (
        "IGBT_FUSE",
        &[
            "Fusivel do IGBT fundido, modulo IGBT substituido",
            "IGBT fuse blown on stack {n}, semiconductor module swapped",
            "Fusiveis IGBT rebentados, curto-circuito no braco",
            "Blown IGBT fuses found, desaturation on stack",
        ],
    ),
    (
        "DC_UNDERVOLTAGE",
        &[
            "Subtensao no barramento DC em arranque",
            "DC link undervoltage at start, precharge unit tested",
            "Tensao DC baixa, condensadores do barramento medidos",
            "DC bus undervoltage {n} V, capacitor bank ESR measured",
        ],
    ),
    (
        "COMM_BUS",
        &[
            "Perda de comunicacao CAN com controlador do topo",
            "CANopen communication lost, fibre optic cable cleaned",
            "Erro de comunicacao Profibus, terminacao corrigida",
            "Communication timeout with pitch controller node {n}",
        ],
    ),
    (
        "CROWBAR",
        &[
            "Atuacao do crowbar em cava profunda",
            "Crowbar fired on grid dip",
            "Tiristores do crowbar danificados, unidade crowbar reparada",
            "Crowbar thyristor kept conducting, snubber board repaired",
        ],
    ),
    (
        "GRID_FILTER",
        &[
            "Filtro LCL com condensador de filtro inchado",
            "LCL filter choke overheated",
            "Reactancia do filtro LCL com ruido anormal",
            "Harmonic filter choke insulation degraded",
        ],
    ),
    (
        "CHOPPER_RESISTOR",
        &[
            "Resistencia de chopper aberta, medicao de isolamento",
            "Brake chopper resistor open circuit, ohmic value {n}",
            "Chopper de travagem sobreaquecido, resistencia trocada",
            "Dynamic braking chopper resistor overheats under load",
        ],
    ),
    (
        "CONTACTOR_WEAR",
        &[
            "Contactor de linha K1 desgastado",
            "Line contactor K1 worn, chattering noise",
            "Contactor de sincronizacao picado, montado novo",
            "Stator contactor pitting observed in maintenance",
        ],
    ),
    (
        "SENSOR_CALIBRATION",
        &[
            "Transdutor LEM descalibrado, offset ajustado",
            "LEM transducer offset drift, recalibrated on site",
            "Sonda PT100 com leitura errada, recalibrada",
            "Voltage measurement card calibration off tolerance",
        ],
    ),
    (
        "UPS_BATTERY",
        &[
            "Baterias da UPS esgotadas, autonomia insuficiente",
            "UPS battery pack end of life, replaced",
            "UPS sem carga, carregador defeituoso",
            "UPS battery autonomy test failed at {n} min",
        ],
    ),
    (
        "EARTH_FAULT",
        &[
            "Defeito a terra no enrolamento do rotor",
            "Earth leakage detected on generator slip rings",
            "Fuga a terra detetada nos aneis coletores",
            "Ground fault relay operated, megger reading {n} MOhm",
        ],
    ),
];

/// Templates for planted tokens missing from [`MODE_LIBRARY`].
pub const GENERIC_MODE_TEMPLATES: &[&str] = &[
    "Converter event logged, code {n}",
    "Converter stopped, module {n} examined",
    "Paragem do conversor, unidade {n} examinada",
];

/// Observation texts attached to converter logs.
pub const OBSERVATION_PHRASES: &[&str] = &[
    "Turbina reposta em servico",
    "Returned to service",
    "Aguarda pecas do armazem",
    "Closed by shift team",
    "Sem mais anomalias",
    "Verificado pelo supervisor",
];

/// Placeholder observations.
pub const EMPTY_OBSERVATIONS: &[&str] = &["None", "-", "n/a"];

/// Background work by subsystem.
pub const BACKGROUND_LIBRARY: &[(&str, &[&str])] = &[
    (
        "Gearbox",
        &[
            "Fuga de oleo na caixa multiplicadora",
            "Gearbox oil filter changed at {n} hours",
            "Ruido no rolamento do veio intermedio",
            "Gearbox oil sample taken for analysis",
        ],
    ),
    (
        "Rotor Bearings",
        &[
            "Lubrificacao do rolamento principal",
            "Main bearing temperature high, grease added",
            "Main bearing seal inspected, no leakage",
        ],
    ),
    (
        "Pitch System",
        &[
            "Pitch motor encoder replaced on blade {n}",
            "Afinacao do angulo de pitch na pa {n}",
            "Pitch bearing greased during service",
        ],
    ),
    (
        "Yaw System",
        &[
            "Yaw brake pads checked and adjusted",
            "Ajuste dos travoes de orientacao",
            "Yaw motor brake released manually",
        ],
    ),
    (
        "Generator",
        &[
            "Generator brushes replaced",
            "Escovas do gerador substituidas",
            "Generator slip ring cleaning performed",
        ],
    ),
    (
        "Blades",
        &[
            "Inspecao visual das pas",
            "Leading edge tape repaired on blade B",
            "Blade drain holes cleared",
        ],
    ),
    (
        "Hydraulic System",
        &[
            "Hydraulic pressure low, accumulator recharged",
            "Troca do filtro hidraulico",
            "Hydraulic hose replaced at brake caliper",
        ],
    ),
    (
        "Tower",
        &[
            "Reaperto de parafusos da torre",
            "Tower flange bolts torqued to {n} Nm",
            "Tower ladder fall arrest inspected",
        ],
    ),
    (
        "Nacelle",
        &[
            "Limpeza geral da nacelle",
            "Nacelle crane annual inspection",
            "Nacelle hatch seal renewed",
        ],
    ),
    (
        "MV-Transformer",
        &[
            "Transformer oil level topped",
            "Inspecao termografica do transformador",
            "Transformer cabinet dust removed",
        ],
    ),
];

/// Farm-specific skew patterns: token, subsystem, templates.
pub const SKEW_LIBRARY: &[(&str, &str, &[&str])] = &[
    (
        "YAW_GEAR_WEAR",
        "Yaw System",
        &[
            "Desgaste nos dentes da coroa de orientacao",
            "Yaw ring gear teeth wear measured",
            "Yaw drive pinion chipped, replaced",
        ],
    ),
    (
        "BLADE_EROSION",
        "Blades",
        &[
            "Erosao do bordo de ataque na pa {n}",
            "Leading edge erosion repaired by rope team",
            "Blade surface pitting from airborne particles",
        ],
    ),
    (
        "PITCH_BATTERY",
        "Pitch System",
        &[
            "Baterias do pitch com capacidade reduzida",
            "Pitch battery cabinet capacity test failed",
            "Pitch emergency batteries replaced in hub",
        ],
    ),
    (
        "MAIN_BEARING_HEAT",
        "Rotor Bearings",
        &[
            "Temperatura elevada no rolamento principal",
            "Main bearing high temperature stop",
            "Main bearing grease purged, temperature monitored",
        ],
    ),
];

/// Stories for causal chains; a chain of length `k` uses the first `k` events.
pub const CHAIN_STORIES: &[&[(&str, &str)]] = &[
    &[
        ("Hydraulic System", "Fuga hidraulica no bloco de valvulas"),
        ("Hydraulic System", "Hydraulic pressure drops overnight"),
        ("Pitch System", "Pitch accumulator pressure low"),
        ("Pitch System", "Pitch cylinder seal replaced"),
        ("Hydraulic System", "Hydraulic pump replaced"),
    ],
    &[
        ("Gearbox", "Gearbox oil temperature rising"),
        ("Gearbox", "Particulas metalicas no filtro de oleo"),
        ("Gearbox", "Vibration alarm on intermediate shaft"),
        ("Gearbox", "Endoscopy shows bearing spalling"),
        ("Gearbox", "Gearbox exchanged by crane team"),
    ],
    &[
        ("Generator", "Generator bearing noise reported"),
        ("Generator", "Desalinhamento entre gerador e multiplicadora"),
        ("Coupling", "Coupling elastomers worn"),
        ("Generator", "Generator realigned with laser tool"),
        ("Generator", "Generator bearing replaced"),
    ],
    &[
        ("Yaw System", "Yaw brake squealing on rotation"),
        ("Yaw System", "Pastilhas de travao de orientacao gastas"),
        ("Yaw System", "Yaw motor overload trip"),
        ("Yaw System", "Yaw gearbox oil leak found"),
        ("Yaw System", "Yaw motor replaced"),
    ],
    &[
        ("Blades", "Blade lightning receptor damaged"),
        ("Lightning Protection", "Lightning counter shows recent strike"),
        ("Blades", "Crack found at blade root"),
        ("Pitch System", "Pitch bearing noise on blade A"),
        ("Blades", "Blade root repaired by rope access"),
    ],
    &[
        ("Nacelle", "Nacelle temperature high in summer"),
        ("Cooling System", "Ventilador da nacelle avariado"),
        ("Generator", "Generator winding temperature alarm"),
        ("Cooling System", "Cooling fan motor replaced"),
        ("Generator", "Derating removed after cooling repair"),
    ],
    &[
        ("Hydraulic System", "Rotor brake pressure unstable"),
        ("Hydraulic System", "Rotor brake caliper leaking"),
        ("Hydraulic System", "Brake disc scored, pads changed"),
        ("Hydraulic System", "Rotor brake caliper overhauled"),
        ("Hydraulic System", "Brake circuit flushed and bled"),
    ],
    &[
        ("Control System", "Controller reboot after freeze"),
        ("Control System", "Memoria do controlador corrompida"),
        ("Control System", "Controller CPU board replaced"),
        ("Control System", "Controller software reinstalled"),
        ("Control System", "Watchdog events cleared after update"),
    ],
    &[
        ("Tower", "Tower vibration above limit"),
        ("Tower", "Parafusos da flange inferior desapertados"),
        ("Tower", "Flange bolts retorqued"),
        ("Tower", "Tower vibration sensor replaced"),
        ("Tower", "Vibration back within limits"),
    ],
    &[
        ("Pitch System", "Pitch motor temperature high on blade C"),
        ("Pitch System", "Pitch drive overcurrent on blade C"),
        ("Pitch System", "Pitch gearbox stiff on blade C"),
        ("Pitch System", "Pitch motor replaced on blade C"),
        ("Pitch System", "Pitch gearbox replaced on blade C"),
    ],
    &[
        ("MV-Transformer", "Transformer temperature alarm"),
        ("MV-Transformer", "Oleo do transformador escurecido"),
        ("MV-Transformer", "Transformer oil analysis shows gases"),
        ("MV-Transformer", "Transformer bushings cleaned"),
        ("MV-Transformer", "Transformer replaced with spare unit"),
    ],
    &[
        ("Rotor Bearings", "Main bearing vibration trend increasing"),
        ("Rotor Bearings", "Main bearing grease contaminated"),
        ("Rotor Bearings", "Main bearing seal leaking grease"),
        ("Rotor Bearings", "Main bearing seal replaced"),
        ("Rotor Bearings", "Main bearing replaced during campaign"),
    ],
];

/// Junk rows: whole-text placeholders.
pub const JUNK_PLACEHOLDERS: &[&str] = &["-", "n/a", "OK", "teste", "nada", "?", "NA", "."];

/// Junk rows: code-only text.
pub const JUNK_CODES: &[&str] = &["FM1209", "FM1209 3321", "ERR_0815", "A7731 102"];

/// Junk rows: non-turbine subsystems and their (informative) text.
pub const JUNK_NON_TURBINE: &[(&str, &str)] = &[
    ("Substation", "Limpeza da subestacao e verificacao de seccionadores"),
    ("Met Mast", "Anemometer replaced on met mast top"),
    ("Roads", "Access road graded after heavy rain"),
    ("Buildings", "Reparacao do telhado do edificio de comando"),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::{is_informative, InformativenessPolicy};
    use crate::workflows::reconcile::content_tokens;
    use std::collections::HashSet;

    fn vocab(templates: &[&str]) -> HashSet<String> {
        templates.iter().flat_map(|t| content_tokens(t)).collect()
    }

    #[test]
    fn mode_vocabularies_are_disjoint() {
        let sets: Vec<(&str, HashSet<String>)> = MODE_LIBRARY.iter().map(|(t, ts)| (*t, vocab(ts))).collect();
        let obs = vocab(OBSERVATION_PHRASES);
        let mut clashes = Vec::new();
        for (i, (a, va)) in sets.iter().enumerate() {
            for w in va.intersection(&obs) {
                clashes.push(format!("{a}/observations: {w}"));
            }
            for (b, vb) in &sets[i + 1..] {
                for w in va.intersection(vb) {
                    clashes.push(format!("{a}/{b}: {w}"));
                }
            }
        }
        assert!(clashes.is_empty(), "{clashes:#?}");
    }

    #[test]
    fn library_text_is_informative() {
        let p = InformativenessPolicy::default();
        let all = MODE_LIBRARY
            .iter()
            .flat_map(|(_, t)| t.iter())
            .chain(BACKGROUND_LIBRARY.iter().flat_map(|(_, t)| t.iter()))
            .chain(SKEW_LIBRARY.iter().flat_map(|(_, _, t)| t.iter()))
            .chain(GENERIC_MODE_TEMPLATES)
            .chain(CHAIN_STORIES.iter().flat_map(|s| s.iter().map(|(_, t)| t)))
            .chain(JUNK_NON_TURBINE.iter().map(|(_, t)| t));
        for t in all {
            assert!(is_informative(&t.replace("{n}", "12"), &p), "{t}");
        }
        for t in JUNK_PLACEHOLDERS.iter().chain(JUNK_CODES) {
            assert!(!is_informative(t, &p), "{t}");
        }
        for (s, _) in JUNK_NON_TURBINE {
            assert!(p.is_non_turbine(s), "{s}");
        }
    }

    #[test]
    fn stories_cover_the_longest_chain() {
        assert!(CHAIN_STORIES.iter().all(|s| s.len() >= 5));
    }
}
