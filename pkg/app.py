import io
import zipfile
from dataclasses import replace
from pathlib import Path

import pandas as pd
import streamlit as st

from control.laws import STRATEGIES
from engine.scenarios import VIOLATION_KINDS, make_violation_scenario
from engine.simulation import MEASUREMENT_MODES, Scenario, SimOptions, run
from generators.pv_profiles import PvProfileSpec
from generators.report_tables import summary_table
from generators.results_writer import (
    META_FILE,
    RESULTS_FILE,
    SAVFI_FILE,
    meta_json_bytes,
    results_csv_bytes,
    savfi_csv_bytes,
)
from metrics.fluctuation import SAVFI_SCALE
from model.errors import FeederParseError, ScenarioError
from parsers.feeder_parser import load_feeder, parse_feeder
from utils.helpers import file_friendly_name

FEEDER_DIR = Path(__file__).resolve().parent / "feeders"

# ---------------------------------------------------------
# Streamlit app config
# ---------------------------------------------------------
st.set_page_config(
    page_title="Feeder Voltage Fluctuation Simulator",
    layout="wide"
)

st.title("Feeder Voltage Fluctuation Simulator")

st.markdown(
    """
Runs a **quasi-static 1-minute simulation** of a radial three-phase feeder
with variable PV and compares **local inverter var control** strategies
(no control, Thevenin R/X, power-flow measurement) by **SAVFI** and
**ANSI band violations**. Results download as CSV.
"""
)

# ---------------------------------------------------------
# Sidebar: feeder and scenario
# ---------------------------------------------------------
st.sidebar.header("Feeder")

bundled = sorted(p.name for p in FEEDER_DIR.glob("*.json"))
feeder_choice = st.sidebar.selectbox("Bundled feeder", bundled)
uploaded = st.sidebar.file_uploader("...or upload a feeder JSON", type=["json"])

st.sidebar.header("Scenario")
preset = st.sidebar.selectbox("Preset", ["none"] + list(VIOLATION_KINDS))
strategies = st.sidebar.multiselect("Control strategies", list(STRATEGIES), default=list(STRATEGIES))
variability = st.sidebar.slider("PV variability", 0.0, 1.0, 0.3, 0.05)
seed = st.sidebar.number_input("Seed", min_value=0, value=0, step=1)
start_min = st.sidebar.number_input("Start (minute of day)", min_value=0, max_value=1439, value=660, step=15)
steps = st.sidebar.number_input("Steps (1 min)", min_value=2, max_value=1440, value=60, step=15)
correlated = st.sidebar.checkbox("Share one noise realization across PV units", value=False)
measurement = st.sidebar.selectbox("Measurement timing", list(MEASUREMENT_MODES))
load_deltas = st.sidebar.checkbox("Count load changes in the measured injection change", value=False)

run_btn = st.sidebar.button("Run Simulation")

# ---------------------------------------------------------
# Initialize session state
# ---------------------------------------------------------
if "results" not in st.session_state:
    st.session_state["results"] = {}

# ---------------------------------------------------------
# Run simulations when button is clicked
# ---------------------------------------------------------
if run_btn:
    if not strategies:
        st.error("Please select at least one control strategy.")
        st.stop()

    try:
        feeder = parse_feeder(uploaded.getvalue()) if uploaded else load_feeder(FEEDER_DIR / feeder_choice)
    except FeederParseError as exc:
        st.error(f"Feeder could not be parsed: {exc}")
        st.stop()

    spec = PvProfileSpec(variability=float(variability), seed=int(seed))
    try:
        if preset == "none":
            base = Scenario(
                feeder=feeder,
                horizon=int(steps),
                start_min=float(start_min),
                pv_spec=spec,
                correlated_pv=correlated,
                name=feeder.name,
            )
        else:
            with st.spinner("Searching for a violation event..."):
                base = make_violation_scenario(
                    feeder, preset, horizon=int(steps), start_min=float(start_min), pv_spec=spec
                )
        base.validate()
    except (ScenarioError, ValueError) as exc:
        st.error(str(exc))
        st.stop()

    options = SimOptions(measurement_mode=measurement, include_load_deltas=load_deltas)
    results = {}
    for strategy in strategies:
        with st.spinner(f"Simulating control = {strategy}..."):
            results[strategy] = run(replace(base, control=strategy), options)

    # Save results to session state so they persist across reruns
    st.session_state["results"] = results

# ---------------------------------------------------------
# If we don't have results yet, show instructions
# ---------------------------------------------------------
if not st.session_state["results"]:
    st.info("Pick a feeder and scenario in the sidebar and click **Run Simulation** to start.")
    st.stop()

results = st.session_state["results"]

# ---------------------------------------------------------
# Strategy comparison
# ---------------------------------------------------------
st.subheader("SAVFI by Bus")
st.caption(f"Mean SAVFI over phases and windows, in units of {SAVFI_SCALE:g} pu.")

comparison = pd.concat(
    {strategy: res.bus_savfi() / SAVFI_SCALE for strategy, res in results.items()}, axis=1
)
comparison.index.name = "bus"
st.dataframe(comparison, use_container_width=True)

counts = pd.DataFrame(
    [
        {
            "control": strategy,
            "violations": res.violation_count(),
            "degraded_steps": len(res.degraded_steps),
        }
        for strategy, res in results.items()
    ]
)
st.dataframe(counts, use_container_width=True)

# ---- Per-strategy detail ----
detail = st.selectbox("Details for", list(results.keys()))
st.dataframe(summary_table(results[detail]), use_container_width=True)

# -----------------------------------------------------
# Downloads
# -----------------------------------------------------
st.markdown("---")
st.subheader("Downloads")

files = {}
for strategy, res in results.items():
    prefix = file_friendly_name(f"{res.scenario.name}_{strategy}")
    files[f"{prefix}/{RESULTS_FILE}"] = results_csv_bytes(res)
    files[f"{prefix}/{SAVFI_FILE}"] = savfi_csv_bytes(res)
    files[f"{prefix}/{META_FILE}"] = meta_json_bytes(res)

    col_r, col_s = st.columns(2)
    with col_r:
        st.download_button(
            label=f"Download {strategy} results.csv",
            file_name=f"{prefix}_{RESULTS_FILE}",
            mime="text/csv",
            data=files[f"{prefix}/{RESULTS_FILE}"],
            key=f"dl_results_{strategy}",
        )
    with col_s:
        st.download_button(
            label=f"Download {strategy} savfi.csv",
            file_name=f"{prefix}_{SAVFI_FILE}",
            mime="text/csv",
            data=files[f"{prefix}/{SAVFI_FILE}"],
            key=f"dl_savfi_{strategy}",
        )

# All result files in one ZIP
zip_buf = io.BytesIO()
with zipfile.ZipFile(zip_buf, "w", zipfile.ZIP_DEFLATED) as zf:
    for name, data in files.items():
        zf.writestr(name, data)
zip_buf.seek(0)

st.download_button(
    label="Download All Results (ZIP)",
    file_name="gridflux_results.zip",
    mime="application/zip",
    data=zip_buf.getvalue(),
    key="dl_all_results_zip",
)

st.markdown("---")
st.caption(
    "Voltages come from a three-phase backward/forward sweep. "
    "Inverters see only their own PV output and the flows on lines leaving their bus."
)
