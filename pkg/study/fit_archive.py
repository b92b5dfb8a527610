import os
import json
import logging

import h5py
import numpy as np

logger = logging.getLogger(__name__)

ARCHIVE_FILE = 'fits.h5'


class FitArchive:
    def __init__(self, base_dir: str, filename: str = ARCHIVE_FILE):
        """
        Архив оценённых моделей в HDF5: одна группа <variant>/<chain>/<panel> на ячейку исследования.

        Args:
            base_dir (str): Директория для файла архива.
        """
        self.base_dir = base_dir
        self.path = os.path.join(base_dir, filename)
        os.makedirs(self.base_dir, exist_ok=True)

    @staticmethod
    def group_name(cell) -> str:
        return f'{cell.variant.value}/{cell.chain.value}/{cell.kind.value}'

    def add_cell(self, cell, global_attributes: dict = None):
        """
        Записывает одну ячейку. Существующая группа с тем же именем перезаписывается.
        Неоценённая ячейка сохраняется как пустая группа с атрибутом error.
        """
        name = self.group_name(cell)
        with h5py.File(self.path, "a") as hdf_file:
            if name in hdf_file:
                del hdf_file[name]
            group = hdf_file.create_group(name)
            if not cell.ok:
                group.attrs["error"] = cell.error or ''
            else:
                self._write_fit(group, cell.fit, cell.labels)

            for key, value in (global_attributes or {}).items():
                hdf_file.attrs[key] = value

    @staticmethod
    def _write_fit(group, fit, labels: dict):
        names = np.array([n.encode("utf-8") for n in fit.params.index])
        for key, values in (("params", fit.params), ("stderr", fit.stderr), ("tstats", fit.tstats)):
            group.create_dataset(key, data=values.to_numpy(dtype="float64"))
        if fit.robust_tstats is not None:
            group.create_dataset("robust_tstats", data=fit.robust_tstats.to_numpy(dtype="float64"))
        group.create_dataset("param_names", data=names)
        group.create_dataset("cov", data=fit.cov.to_numpy(dtype="float64"), compression="gzip",
                             compression_opts=9)

        path = group.create_group("path")
        path.create_dataset("half_days", data=np.array([str(h).encode("utf-8") for h in fit.residuals.index]))
        path.create_dataset("residuals", data=fit.residuals.to_numpy(dtype="float64"), compression="gzip",
                            compression_opts=9)
        path.create_dataset("conditional_variance", data=fit.conditional_variance.to_numpy(dtype="float64"),
                            compression="gzip", compression_opts=9)

        group.attrs["order"] = np.array(fit.order, dtype="int64")
        for key in ("loglik", "aic", "bic", "r2", "adj_r2", "grad_norm"):
            group.attrs[key] = float(getattr(fit, key))
        group.attrs["n_obs"] = int(fit.n_obs)
        group.attrs["converged"] = bool(fit.converged)
        group.attrs["at_boundary"] = bool(fit.at_boundary)
        group.attrs["mode"] = fit.mode.value
        group.attrs["labels"] = json.dumps(labels, ensure_ascii=False, sort_keys=True)

    def write_report(self, report):
        if os.path.exists(self.path):
            os.remove(self.path)
        start, end = report.config.window
        global_attributes = {
            "window": f"{start}..{end}",
            "seed": int(report.config.seed),
            "variants": ",".join(v.value for v in report.config.variants),
        }
        for cell in report.cells:
            self.add_cell(cell, global_attributes)
        logger.info(f"Архив моделей записан в {self.path} ({len(report.cells)} ячеек)")

    def read_cell(self, variant: str, chain: str, panel: str) -> dict:
        """
        Returns:
            dict: параметры по именам, ковариационная матрица, путь условной дисперсии и атрибуты ячейки.
        """
        name = f"{variant}/{chain}/{panel}"
        with h5py.File(self.path, "r") as hdf_file:
            if name not in hdf_file:
                raise KeyError(f"В архиве {self.path} нет группы {name}")
            group = hdf_file[name]
            attrs = dict(group.attrs)
            if "error" in attrs:
                return {"error": str(attrs["error"])}
            names = [n.decode("utf-8") for n in group["param_names"][:]]
            return {
                "params": dict(zip(names, group["params"][:].tolist())),
                "tstats": dict(zip(names, group["tstats"][:].tolist())),
                "cov": group["cov"][:],
                "conditional_variance": group["path/conditional_variance"][:],
                "order": tuple(int(v) for v in attrs["order"]),
                "n_obs": int(attrs["n_obs"]),
                "labels": json.loads(attrs["labels"]),
            }
