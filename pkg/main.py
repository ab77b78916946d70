#!/usr/bin/env python3
# 🔋 GP-ICE 容量估计 - 主程序
# 短时恒流电压片段 → 电池容量（带不确定度）

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from battery.dataio import Direction, load_dataset, read_curve_csv, write_dataset
from battery.errors import DataFormatError, NonGalvanostaticError
from battery.features import (
    build_training_set,
    extract_features,
    resolve_voltage_grid,
    voltage_grid,
    START_TOLERANCE,
)
from battery.smoothing import SGConfig, smooth_curve
from battery.synth import SynthPlan
from evaluation.harness import infer_direction, leave_one_cell_out
from evaluation.report_exporter import ReportExporter
from evaluation.run_config import ConfigError, RunConfig, load_run_config, read_grid_csv
from evaluation.sweep import DEFAULT_GRID, compare_baseline, sweep
from gpr.model_io import ModelFormatError, load_model, save_model
from gpr.regression import fit

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# 这些异常说明输入本身有问题 → 退出码 2
USAGE_ERRORS = (ConfigError, DataFormatError, NonGalvanostaticError, FileNotFoundError,
                ModelFormatError)


def print_welcome():
    """打印欢迎信息"""
    print("""
╔═══════════════════════════════════════════════════════════╗
║                                                           ║
║   🔋  GP-ICE 容量估计  🔋                                  ║
║                                                           ║
║   功能:                                                   ║
║   • evaluate - 留一电芯交叉验证                            ║
║   • sweep    - (Δt, V_l) × n 扫描 + IC/DV 基线对比         ║
║   • synth    - 合成数据集                                  ║
║   • fit      - 训练并保存模型                              ║
║   • predict  - 在线片段 → 容量 ± 2σ                        ║
║                                                           ║
╚═══════════════════════════════════════════════════════════╝
    """)


# ============ 参数解析 ============

def _add_run_options(parser: argparse.ArgumentParser):
    """RunConfig 字段对应的命令行覆盖"""
    parser.add_argument('--config', help='JSON 配置文件 (key → value)')
    parser.add_argument('--manifest', help='数据集 manifest 路径')
    parser.add_argument('--direction', choices=['charge', 'discharge'])
    parser.add_argument('--v-l', dest='v_l', type=float, help='下限电压 V_l (V)')
    parser.add_argument('--delta-t', dest='delta_t', type=float, help='在线测试时长 Δt (s)')
    parser.add_argument('--v-h', dest='v_h', type=float, help='固定上限电压 V_h (V)')
    parser.add_argument('-n', dest='n', type=int, help='输入维数 n')
    parser.add_argument('--sg-window', dest='sg_window', type=int)
    parser.add_argument('--sg-order', dest='sg_order', type=int)
    parser.add_argument('--resample-interval', dest='resample_interval', type=float)
    parser.add_argument('--kernel', choices=['matern52', 'squared_exponential'])
    parser.add_argument('--isotropic', dest='ard', action='store_false', default=None,
                        help='单一长度尺度（默认逐维 ARD）')
    parser.add_argument('--restarts', type=int)
    parser.add_argument('--max-iter', dest='max_iter', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--refit', choices=['fold', 'grid'])
    parser.add_argument('--output', '-o', help='输出目录')
    parser.add_argument('--jobs', '-j', type=int, help='并行线程数（默认 CPU 核数）')
    parser.add_argument('--keep-going', dest='keep_going', action='store_true', default=None,
                        help='某一折失败时继续')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='gp-ice',
                                     description='GP-ICE capacity estimation from short GV segments')
    parser.add_argument('-v', '--verbose', action='store_true', help='DEBUG 日志')
    parser.add_argument('-q', '--quiet', action='store_true', help='只显示警告')
    commands = parser.add_subparsers(dest='command')

    evaluate = commands.add_parser('evaluate', help='留一电芯评估')
    _add_run_options(evaluate)

    sweep_parser = commands.add_parser('sweep', help='配置扫描 + IC+DV 对比')
    _add_run_options(sweep_parser)
    sweep_parser.add_argument('--grid', help='网格 CSV: delta_t,v_l[,config]')
    sweep_parser.add_argument('--n-sweep', dest='n_sweep', help='n 扫描, 例如 2:12:2')
    sweep_parser.add_argument('--no-baseline', dest='baseline', action='store_false',
                              default=None, help='不跑 IC+DV 基线')

    synth = commands.add_parser('synth', help='生成合成数据集')
    synth.add_argument('spec', nargs='?', help='JSON 描述文件')
    synth.add_argument('--preset', choices=['oxford', 'nasa'])
    synth.add_argument('--n-cells', dest='n_cells', type=int)
    synth.add_argument('--cycles', type=int)
    synth.add_argument('--seed', type=int)
    synth.add_argument('--noise-std', dest='noise_std', type=float)
    synth.add_argument('--interval', type=float)
    synth.add_argument('--output', '-o', required=True, help='输出目录')

    fit_parser = commands.add_parser('fit', help='训练 GP 并保存')
    _add_run_options(fit_parser)
    fit_parser.add_argument('--segment', help='在线片段 CSV（用 Δt 确定 V_h）')
    fit_parser.add_argument('--model-out', dest='model_out', required=True)

    predict = commands.add_parser('predict', help='在线片段 → 容量估计')
    predict.add_argument('--model', required=True)
    predict.add_argument('--segment', required=True)
    predict.add_argument('--json-out', dest='json_out', help='结果另存为 JSON')
    return parser


def resolve_run_config(args: argparse.Namespace, require_manifest: bool = True) -> RunConfig:
    """配置文件 → 命令行覆盖 → 校验"""
    config = load_run_config(args.config) if getattr(args, 'config', None) else RunConfig()
    overrides = {name: getattr(args, name) for name in RunConfig.field_names()
                 if hasattr(args, name)}
    return config.merged(overrides).check(require_manifest)


# ============ 命令 ============

def cmd_evaluate(args: argparse.Namespace) -> int:
    config = resolve_run_config(args)
    dataset = load_dataset(config.manifest)
    print(f"📂 {dataset.name}: {dataset.n_cells} cells, {dataset.n_samples} curves")

    report = leave_one_cell_out(
        dataset, config.extraction_config(), config.sg_config(), config.gp_config(),
        seed=config.seed, direction=config.direction_or_none(), refit=config.refit,
        keep_going=config.keep_going, jobs=config.effective_jobs(),
    )
    ReportExporter().export_report(report, config.output, run_config=config.to_dict())

    print(f"📊 {report.label}")
    print(f"   RMSPE: {report.overall_rmspe:.3f}%")
    print(f"   CS_0.67σ: {report.cs_067:.3f}   CS_2σ: {report.cs_2:.3f}")
    for cell_id, value in report.per_cell_rmspe.items():
        print(f"   • {cell_id}: {value:.3f}%")
    for fold in report.failed_folds:
        print(f"   ❌ {fold.test_cell_id}: {fold.error}")
    print(f"✅ report written to {config.output}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = resolve_run_config(args)
    grid = read_grid_csv(config.grid) if config.grid else list(DEFAULT_GRID)
    dataset = load_dataset(config.manifest)
    print(f"📂 {dataset.name}: {dataset.n_cells} cells, {dataset.n_samples} curves")
    print(f"🧭 {len(grid)} configuration(s) × n = {config.n_values()}")

    runner = compare_baseline if config.baseline else sweep
    kwargs = dict(sg=config.sg_config(), gp=config.gp_config(), seed=config.seed,
                  n_values=config.n_values(), direction=config.direction_or_none(),
                  refit=config.refit, jobs=config.effective_jobs())
    result = runner(dataset, grid, **kwargs)
    ReportExporter().export_sweep(result, config.output, run_config=config.to_dict())

    for report in result.reports():
        print(f"   {report.label:<28} RMSPE {report.overall_rmspe:7.3f}%   "
              f"CS_2σ {report.cs_2:.3f}")
    failed = []
    for entry in result.entries:
        if entry.error:
            failed.append(f"{entry.label} (n={entry.n}): {entry.error}")
        elif entry.report.failed_folds:
            failed.extend(f"{entry.label} (n={entry.n}) fold {fold.test_cell_id}: {fold.error}"
                          for fold in entry.report.failed_folds)
    if result.baseline_error:
        failed.append(f"IC+DV: {result.baseline_error}")
    elif result.baseline is not None:
        failed.extend(f"IC+DV fold {fold.test_cell_id}: {fold.error}"
                      for fold in result.baseline.failed_folds)
    for message in failed:
        print(f"   ❌ {message}")
    print(f"✅ sweep written to {config.output}")
    # 任何一折失败都算失败，除非 --keep-going
    return EXIT_FAILURE if failed and not config.keep_going else EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    data: Dict[str, Any] = {}
    if args.spec:
        spec_path = Path(args.spec)
        if not spec_path.exists():
            raise ConfigError([f"synth: spec file not found: {spec_path}"])
        try:
            with open(spec_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError([f"synth: {spec_path} is not valid JSON ({e})"])
        if not isinstance(data, dict):
            raise ConfigError([f"synth: {spec_path} must hold a JSON object"])
    for key in ('preset', 'n_cells', 'cycles', 'seed', 'noise_std', 'interval'):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    try:
        plan = SynthPlan.from_dict(data)
        dataset = plan.build()
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError([f"synth: {e}"])

    manifest = write_dataset(dataset, args.output)
    print(f"🧪 {dataset.name}: {dataset.n_cells} cells, {dataset.n_samples} curves")
    print(f"✅ manifest: {manifest}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    config = resolve_run_config(args)
    extraction = config.extraction_config()
    sg = config.sg_config()
    dataset = load_dataset(config.manifest)
    direction = config.direction_or_none() or infer_direction(dataset)

    if config.v_h is not None:
        extraction.check_direction(direction)
        voltages = voltage_grid(extraction.v_l, extraction.v_h, extraction.n)
    elif args.segment:
        segment = smooth_curve(read_curve_csv(args.segment), sg, clamp=True)
        voltages = resolve_voltage_grid(extraction, segment, direction)
    else:
        raise ConfigError(["fit: give v_h, or delta_t together with --segment"])

    training = build_training_set(dataset, extraction, voltages, sg, direction)
    model = fit(training.x, training.y, config.gp_config(), seed=config.seed)
    metadata = {
        'v_l': extraction.v_l,
        'voltages': [float(v) for v in voltages],
        'direction': direction.value,
        'sg': sg.to_dict(),
        'dataset': dataset.name,
        'n_train': len(training),
        'n_excluded': len(training.excluded),
    }
    save_model(model, args.model_out, metadata)

    hp = model.hyperparams
    print(f"🎯 grid: {', '.join(f'{v:.4f}' for v in voltages)} V")
    print(f"   N_D = {len(training)} ({len(training.excluded)} excluded)")
    print(f"   σ_f = {hp.signal_std:.4g} Ah, σ_n = {hp.noise_std:.4g} Ah, "
          f"ρ = {np.array2string(hp.lengthscales, precision=4)} s")
    print(f"✅ model saved: {args.model_out}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    model, metadata = load_model(args.model)
    try:
        voltages = np.array(metadata['voltages'], dtype=float)
        v_l = float(metadata['v_l'])
        direction = Direction.parse(metadata['direction'])
        sg = SGConfig.from_dict(metadata['sg'])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"model metadata incomplete: {e}")

    segment = read_curve_csv(args.segment)
    smoothed = smooth_curve(segment, sg, clamp=True)
    if direction.sign * (smoothed.voltage[0] - v_l) > START_TOLERANCE:
        raise ValueError(f"segment starts at {smoothed.voltage[0]:.4f} V, past v_l = {v_l} V")
    x = extract_features(smoothed, voltages, v_l, direction)
    prediction = model.predict(x)
    lower, upper = prediction.interval(2.0)

    print(f"🔋 capacity: {prediction.mean:.4f} Ah ± {2 * prediction.std:.4f} Ah (2σ)")
    result = {'capacity_ah': prediction.mean, 'sigma_ah': prediction.std,
              'lower_2sigma_ah': lower, 'upper_2sigma_ah': upper,
              'x': [float(v) for v in x], 'voltages': [float(v) for v in voltages]}
    print(json.dumps(result))
    if args.json_out:
        with open(args.json_out, 'w', encoding='utf-8') as f:
            json.dump(result, f, indent=2)
    return EXIT_OK


COMMANDS = {
    'evaluate': cmd_evaluate,
    'sweep': cmd_sweep,
    'synth': cmd_synth,
    'fit': cmd_fit,
    'predict': cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    if args.command is None:
        print_welcome()
        parser.print_help()
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print("❌ invalid configuration:", file=sys.stderr)
        for error in e.errors:
            print(f"   • {error}", file=sys.stderr)
        return EXIT_USAGE
    except USAGE_ERRORS as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
